use crate::config::{digest_path, PipelineConfig};
use crate::{Failure, ProgramFormat};
use anyhow::{anyhow, bail, Context};
use serde_json::json;
use sgqa_core::balancer;
use sgqa_core::clustering::cluster_graph;
use sgqa_core::lexicon::Lexicon;
use sgqa_core::pipeline::{compute_stats, generate_corpus, preprocess_all, read_all_jsonl, read_jsonl, write_record};
use sgqa_core::program::{self, parse_pseudocode, parse_semantic_string, render_program, Program};
use sgqa_core::question::{QuestionEngine, TemplateSet, RECORD_SCHEMA_VERSION};
use sgqa_core::rng::SeedStream;
use sgqa_core::scene_graph::{self, load_scene_graphs, write_scene_graphs, SceneGraph};
use sgqa_core::synth::synth_graphs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

type Outcome = Result<(), Failure>;

fn lexicon(cfg: &PipelineConfig) -> anyhow::Result<Lexicon> {
    Lexicon::load(&cfg.lexicon).context("loading lexicon")
}

fn load_graphs(path: &Path, lex: &Lexicon) -> anyhow::Result<Vec<SceneGraph>> {
    let (graphs, report) = load_scene_graphs(path, &lex.attributes)?;
    log::info!("loaded {} image(s), {} object(s)", report.images, report.objects);
    Ok(graphs)
}

fn engine(cfg: &PipelineConfig, lex: Lexicon) -> anyhow::Result<QuestionEngine> {
    let mut templates = match &cfg.templates {
        Some(p) => TemplateSet::load(p).context("loading templates")?,
        None => TemplateSet::bundled(),
    };
    templates.retain_prefixes(&cfg.template_filter);
    if templates.is_empty() {
        bail!("no templates left after filtering by {:?}", cfg.template_filter);
    }
    QuestionEngine::new(templates, lex, cfg.engine()).map_err(|e| anyhow!(e))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes `<output>.manifest.json`. Nothing time- or machine-dependent goes in,
/// so identical runs produce identical manifests.
fn write_manifest(cfg: &PipelineConfig, command: &str, output: &Path, counts: serde_json::Value) -> anyhow::Result<()> {
    let doc = json!({
        "tool": "sgqa",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "record_schema_version": RECORD_SCHEMA_VERSION,
        "output_sha256": digest_path(output),
        "counts": counts,
    });
    let mut w = create(&manifest_path(output))?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("missing {what} path"))
}

fn do_preprocess(cfg: &PipelineConfig, input: &Path, output: &Path) -> anyhow::Result<Vec<SceneGraph>> {
    let lex = lexicon(cfg)?;
    let mut graphs = load_graphs(input, &lex)?;
    let report = preprocess_all(&mut graphs, &cfg.preprocess(), &lex, cfg.jobs)?;
    let mut w = create(output)?;
    write_scene_graphs(&graphs, &mut w)?;
    w.flush()?;
    write_manifest(cfg, "preprocess", output, json!({ "images": graphs.len(), "report": report }))?;
    Ok(graphs)
}

pub fn preprocess(cfg: &PipelineConfig) -> Outcome {
    let input = required(&cfg.input, "input")?;
    let output = required(&cfg.output, "output")?;
    do_preprocess(cfg, input, output)?;
    Ok(())
}

pub fn cluster(cfg: &PipelineConfig) -> Outcome {
    let run = || -> anyhow::Result<()> {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let lex = lexicon(cfg)?;
        let mut graphs = load_graphs(input, &lex)?;
        preprocess_all(&mut graphs, &cfg.preprocess(), &lex, cfg.jobs)?;
        let mut w = create(output)?;
        let mut total = 0;
        for g in &graphs {
            let clusters = cluster_graph(g, cfg.max_features);
            total += clusters.len();
            serde_json::to_writer(&mut w, &json!({ "image_id": g.image_id, "clusters": clusters }))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        write_manifest(cfg, "cluster", output, json!({ "images": graphs.len(), "clusters": total }))
    };
    Ok(run()?)
}

fn do_generate(cfg: &PipelineConfig, graphs: &[SceneGraph], output: &Path) -> anyhow::Result<()> {
    let lex = lexicon(cfg)?;
    let engine = engine(cfg, lex)?;
    let mut w = create(output)?;
    let summary = generate_corpus(graphs, &engine, &cfg.preprocess(), &SeedStream::new(cfg.seed), cfg.jobs, |q| {
        write_record(&q, &mut w)
    })?;
    w.flush()?;
    log::info!("generated {} record(s) from {} image(s)", summary.records, summary.images);
    write_manifest(cfg, "generate", output, serde_json::to_value(&summary)?)
}

pub fn generate(cfg: &PipelineConfig) -> Outcome {
    let run = || -> anyhow::Result<()> {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        let lex = lexicon(cfg)?;
        let graphs = load_graphs(input, &lex)?;
        do_generate(cfg, &graphs, output)
    };
    Ok(run()?)
}

fn report_path(cfg: &PipelineConfig, output: &Path) -> PathBuf {
    cfg.report.clone().unwrap_or_else(|| {
        let mut s = output.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    })
}

fn do_balance(cfg: &PipelineConfig, input: &Path, output: &Path, report: &Path) -> anyhow::Result<()> {
    let records = read_all_jsonl(open(input)?).with_context(|| format!("reading {}", input.display()))?;
    let (kept, rep) = balancer::balance(records, &cfg.balance, &SeedStream::new(cfg.seed));
    for w in &rep.warnings {
        log::debug!("{w}");
    }
    let mut w = create(output)?;
    for q in &kept {
        write_record(q, &mut w)?;
    }
    w.flush()?;
    let mut rw = create(report)?;
    serde_json::to_writer_pretty(&mut rw, &rep)?;
    rw.write_all(b"\n")?;
    rw.flush()?;
    write_manifest(
        cfg,
        "balance",
        output,
        json!({ "input": rep.input, "output": rep.output, "warnings": rep.warnings.len() }),
    )
}

pub fn balance(cfg: &PipelineConfig) -> Outcome {
    let run = || -> anyhow::Result<()> {
        let input = required(&cfg.input, "input")?;
        let output = required(&cfg.output, "output")?;
        do_balance(cfg, input, output, &report_path(cfg, output))
    };
    Ok(run()?)
}

fn do_stats(cfg: &PipelineConfig, input: &Path, output: &Path, csv: Option<&Path>) -> anyhow::Result<()> {
    let acc = compute_stats(read_jsonl(open(input)?)).with_context(|| format!("reading {}", input.display()))?;
    let report = acc.report();
    let mut w = create(output)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    if let Some(csv) = csv {
        let mut c = create(csv)?;
        c.write_all(report.to_csv().as_bytes())?;
        c.flush()?;
    }
    write_manifest(cfg, "stats", output, json!({ "records": report.overall.count }))
}

pub fn stats(cfg: &PipelineConfig, csv: Option<&Path>) -> Outcome {
    let run = || -> anyhow::Result<()> {
        do_stats(cfg, required(&cfg.input, "input")?, required(&cfg.output, "output")?, csv)
    };
    Ok(run()?)
}

fn parse_program(text: &str, format: ProgramFormat) -> anyhow::Result<Program> {
    let trimmed = text.trim();
    let format = match format {
        ProgramFormat::Auto if trimmed.starts_with('[') => ProgramFormat::Json,
        ProgramFormat::Auto if trimmed.lines().next().is_some_and(|l| l.contains('=')) => ProgramFormat::Pseudocode,
        ProgramFormat::Auto => ProgramFormat::Semantic,
        f => f,
    };
    Ok(match format {
        ProgramFormat::Json => serde_json::from_str(trimmed).context("parsing JSON program")?,
        ProgramFormat::Pseudocode => parse_pseudocode(trimmed).context("parsing pseudocode")?,
        _ => parse_semantic_string(trimmed).context("parsing semantic string")?,
    })
}

pub fn execute(
    cfg: &PipelineConfig,
    program: &Path,
    graph: &Path,
    image: Option<&str>,
    format: ProgramFormat,
    clean: bool,
    as_json: bool,
) -> Outcome {
    let run = || -> anyhow::Result<()> {
        let text = std::fs::read_to_string(program).with_context(|| format!("reading {}", program.display()))?;
        let program = parse_program(&text, format)?;
        let lex = lexicon(cfg)?;
        let graphs = load_graphs(graph, &lex)?;
        let mut g = match image {
            Some(id) => graphs
                .into_iter()
                .find(|g| g.image_id == id)
                .ok_or_else(|| anyhow!("image {id} not found in {}", graph.display()))?,
            None if graphs.len() == 1 => graphs.into_iter().next().expect("one graph"),
            None => bail!("{} holds {} images; pick one with --image", graph.display(), graphs.len()),
        };
        if clean && !g.preprocessed {
            scene_graph::preprocess(&mut g, &cfg.preprocess(), &lex.contradictions, &lex.taxonomy);
        }
        let exec = program::execute(&program, &g);
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        if as_json {
            let doc = json!({ "image_id": g.image_id, "program": program, "trace": exec.trace, "answer": exec.answer });
            writeln!(out, "{doc}")?;
        } else {
            for (line, result) in render_program(&program).lines().zip(&exec.trace) {
                writeln!(out, "{line:<48} => {result}")?;
            }
            writeln!(out, "answer: {}", exec.answer)?;
        }
        Ok(())
    };
    Ok(run()?)
}

/// One semantic string per line; `#` comments and blank lines are skipped.
/// Every bad line is reported, not just the first.
pub fn parse_semantic(cfg: &PipelineConfig) -> Outcome {
    let input = required(&cfg.input, "input").map_err(Failure::from)?;
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))
        .map_err(Failure::from)?;
    let mut blocks = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_semantic_string(line) {
            Ok(p) => blocks.push(render_program(&p)),
            Err(e) => errors.push(format!("line {}: {e}", i + 1)),
        }
    }
    if !errors.is_empty() {
        return Err(Failure {
            kind: "parse",
            message: format!("{} line(s) failed to parse", errors.len()),
            details: errors,
        });
    }
    let body = blocks.iter().map(|b| format!("{b}\n")).collect::<Vec<_>>().join("\n");
    let write = || -> anyhow::Result<()> {
        match &cfg.output {
            Some(p) => {
                let mut w = create(p)?;
                w.write_all(body.as_bytes())?;
                w.flush()?;
            }
            None => std::io::stdout().lock().write_all(body.as_bytes())?,
        }
        Ok(())
    };
    Ok(write()?)
}

pub fn synth(cfg: &PipelineConfig, count: usize) -> Outcome {
    let run = || -> anyhow::Result<()> {
        let output = required(&cfg.output, "output")?;
        let lex = lexicon(cfg)?;
        let graphs = synth_graphs(cfg.seed, count, &cfg.synth, &lex);
        let mut w = create(output)?;
        write_scene_graphs(&graphs, &mut w)?;
        w.flush()?;
        write_manifest(cfg, "synth", output, json!({ "images": graphs.len() }))
    };
    Ok(run()?)
}

/// Every stage in sequence. Each file equals what the stand-alone command
/// would write given the previous file as input.
pub fn run(cfg: &PipelineConfig, out_dir: &Path) -> Outcome {
    let go = || -> anyhow::Result<()> {
        let input = required(&cfg.input, "input")?;
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let graphs_out = out_dir.join("graphs.json");
        let questions = out_dir.join("questions.jsonl");
        let balanced = out_dir.join("balanced.jsonl");
        let report = out_dir.join("balance_report.json");
        let stats = out_dir.join("stats.json");
        let graphs = do_preprocess(cfg, input, &graphs_out)?;
        let staged = |p: &Path| PipelineConfig { input: Some(p.to_path_buf()), ..cfg.clone() };
        do_generate(&staged(&graphs_out), &graphs, &questions)?;
        do_balance(&staged(&questions), &questions, &balanced, &report)?;
        do_stats(&staged(&balanced), &balanced, &stats, Some(&out_dir.join("stats.csv")))
    };
    Ok(go()?)
}
