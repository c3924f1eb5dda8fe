//! `sgqa`: scene-graph question generation from the command line.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::PipelineConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "sgqa", version, about = "Generate balanced, program-annotated questions from scene graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Flags beat environment variables, which
/// beat the `--config` file, which beats the defaults.
#[derive(Args, Debug, Default)]
struct Common {
    /// JSON file with any subset of the pipeline settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Output does not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Template file or directory.
    #[arg(long, global = true, env = "SGQA_TEMPLATES")]
    templates: Option<PathBuf>,
    /// Keep only templates whose id starts with this (repeatable).
    #[arg(long = "template", global = true)]
    template_filter: Vec<String>,
    /// Lexicon overrides; the bundled lexicon is used for any left unset.
    #[arg(long, global = true, env = "SGQA_ATTRIBUTES")]
    attributes: Option<PathBuf>,
    #[arg(long, global = true, env = "SGQA_CONTRADICTIONS")]
    contradictions: Option<PathBuf>,
    #[arg(long, global = true, env = "SGQA_TAXONOMY")]
    taxonomy: Option<PathBuf>,
    #[arg(long, global = true, env = "SGQA_RELATION_INVERSES")]
    relation_inverses: Option<PathBuf>,
    #[arg(long, global = true, env = "SGQA_OUTLIERS")]
    outliers: Option<PathBuf>,
    /// Same-name boxes with IoU above this are merged.
    #[arg(long, global = true)]
    iou_threshold: Option<f64>,
    /// Share of a part box that must lie inside its superclass box.
    #[arg(long, global = true)]
    containment_threshold: Option<f64>,
    /// Most shared features a cluster may be defined by.
    #[arg(long, global = true)]
    max_features: Option<usize>,
    /// Chance that a question also gets a problematic variant.
    #[arg(long, global = true)]
    perturb_ratio: Option<f64>,
    /// Questions must be shorter than this many tokens.
    #[arg(long, global = true)]
    max_tokens: Option<usize>,
    /// Largest share one answer may hold within a question type.
    #[arg(long, global = true)]
    max_answer_share: Option<f64>,
    /// Allowed relative spread of reasoning-type and attribute counts.
    #[arg(long, global = true)]
    marginal_tolerance: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Io {
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProgramFormat {
    Auto,
    Json,
    Pseudocode,
    Semantic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean scene graphs: contradictions, duplicate boxes, superclass boxes.
    Preprocess(Io),
    /// Write the clusters of every graph as JSONL.
    Cluster(Io),
    /// Generate raw question records as JSONL.
    Generate(Io),
    /// Balance a question JSONL file.
    Balance {
        #[command(flatten)]
        io: Io,
        /// Balance report JSON (default: `<output>.report.json`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Corpus statistics as JSON.
    Stats {
        #[command(flatten)]
        io: Io,
        /// Also write summary rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run one program against one graph and print the trace.
    Execute {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Required when the graph file holds several images.
        #[arg(long)]
        image: Option<String>,
        #[arg(long, value_enum, default_value_t = ProgramFormat::Auto)]
        format: ProgramFormat,
        /// Clean the graph before running.
        #[arg(long)]
        preprocess: bool,
        /// Print the execution as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Convert semantic strings (one per line) to pseudocode.
    ParseSemantic(Io),
    /// Write random scene graphs.
    Synth {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// preprocess, generate, balance and stats in one go.
    Run {
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Machine-readable failure printed to stderr.
#[derive(Debug, serde::Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub details: Vec<String>,
}

impl Failure {
    pub fn config(details: Vec<String>) -> Self {
        Self { kind: "invalid_config", message: format!("{} configuration error(s)", details.len()), details }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self {
            kind: "runtime",
            message: e.to_string(),
            details: e.chain().skip(1).map(|c| c.to_string()).collect(),
        }
    }
}

fn effective_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::from_file(p).map_err(|e| Failure::config(vec![e]))?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($($field:ident).+ <- $value:expr) => {
            if let Some(v) = $value.clone() {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(seed <- common.seed);
    set!(jobs <- common.jobs);
    set!(iou_threshold <- common.iou_threshold);
    set!(containment_threshold <- common.containment_threshold);
    set!(max_features <- common.max_features);
    set!(perturb_ratio <- common.perturb_ratio);
    set!(max_tokens <- common.max_tokens);
    set!(balance.max_answer_share <- common.max_answer_share);
    set!(balance.marginal_tolerance <- common.marginal_tolerance);
    if common.max_tokens.is_some() {
        cfg.balance.max_tokens = cfg.max_tokens;
    }
    if !common.template_filter.is_empty() {
        cfg.template_filter = common.template_filter.clone();
    }
    macro_rules! set_path {
        ($($field:ident).+ <- $value:expr) => {
            if $value.is_some() {
                cfg.$($field).+ = $value.clone();
            }
        };
    }
    set_path!(templates <- common.templates);
    set_path!(lexicon.attributes <- common.attributes);
    set_path!(lexicon.contradictions <- common.contradictions);
    set_path!(lexicon.taxonomy <- common.taxonomy);
    set_path!(lexicon.relation_inverses <- common.relation_inverses);
    set_path!(lexicon.outliers <- common.outliers);
    Ok(cfg)
}

fn apply_io(cfg: &mut PipelineConfig, io: &Io) {
    if io.input.is_some() {
        cfg.input = io.input.clone();
    }
    if io.output.is_some() {
        cfg.output = io.output.clone();
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let mut cfg = effective_config(&cli.common)?;
    let mut errors = cfg.validate();
    let mut need = |cfg: &PipelineConfig, input: bool, output: bool| {
        if input && cfg.input.is_none() {
            errors.push("an input path is required (--input or config `input`)".into());
        }
        if input {
            if let Some(p) = &cfg.input {
                if !p.exists() {
                    errors.push(format!("input {} does not exist", p.display()));
                }
            }
        }
        if output && cfg.output.is_none() {
            errors.push("an output path is required (--output or config `output`)".into());
        }
    };
    let command = cli.command;
    match &command {
        Command::Preprocess(io) | Command::Cluster(io) | Command::Generate(io) => {
            apply_io(&mut cfg, io);
            need(&cfg, true, true);
        }
        Command::Balance { io, report } => {
            apply_io(&mut cfg, io);
            if report.is_some() {
                cfg.report = report.clone();
            }
            need(&cfg, true, true);
        }
        Command::Stats { io, .. } => {
            apply_io(&mut cfg, io);
            need(&cfg, true, true);
        }
        Command::ParseSemantic(io) => {
            apply_io(&mut cfg, io);
            need(&cfg, true, false);
        }
        Command::Synth { output, .. } => {
            if output.is_some() {
                cfg.output = output.clone();
            }
            need(&cfg, false, true);
        }
        Command::Run { input, .. } => {
            if input.is_some() {
                cfg.input = input.clone();
            }
            need(&cfg, true, false);
        }
        Command::Execute { program, graph, .. } => {
            for p in [program, graph] {
                if !p.exists() {
                    errors.push(format!("{} does not exist", p.display()));
                }
            }
        }
    }
    if !errors.is_empty() {
        return Err(Failure::config(errors));
    }

    match command {
        Command::Preprocess(_) => commands::preprocess(&cfg),
        Command::Cluster(_) => commands::cluster(&cfg),
        Command::Generate(_) => commands::generate(&cfg),
        Command::Balance { .. } => commands::balance(&cfg),
        Command::Stats { csv, .. } => commands::stats(&cfg, csv.as_deref()),
        Command::Execute { program, graph, image, format, preprocess, json } => {
            commands::execute(&cfg, &program, &graph, image.as_deref(), format, preprocess, json)
        }
        Command::ParseSemantic(_) => commands::parse_semantic(&cfg),
        Command::Synth { count, .. } => commands::synth(&cfg, count),
        Command::Run { out_dir, .. } => commands::run(&cfg, &out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let doc = serde_json::json!({ "error": f });
            eprintln!("{doc}");
            ExitCode::from(1)
        }
    }
}
