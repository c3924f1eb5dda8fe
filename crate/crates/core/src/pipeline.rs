//! Multi-image stages with a worker pool and deterministic output order.

use crate::lexicon::Lexicon;
use crate::question::{QuestionEngine, QuestionRecord};
use crate::rng::SeedStream;
use crate::scene_graph::{preprocess, PreprocessConfig, PreprocessReport, SceneGraph};
use crate::stats::StatsAccumulator;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Images handed to the pool at once. Bounds memory during generation.
pub const CHUNK: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot build a pool of {jobs} worker(s): {message}")]
    Pool { jobs: usize, message: String },
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Pool { jobs, message: e.to_string() })
}

impl std::ops::AddAssign for PreprocessReport {
    fn add_assign(&mut self, o: Self) {
        self.contradictory_values_removed += o.contradictory_values_removed;
        self.objects_merged += o.objects_merged;
        self.containers_removed += o.containers_removed;
        self.taxonomy_misses += o.taxonomy_misses;
    }
}

/// Cleans every graph in place. Already preprocessed graphs are left alone.
pub fn preprocess_all(
    graphs: &mut [SceneGraph],
    config: &PreprocessConfig,
    lexicon: &Lexicon,
    jobs: usize,
) -> Result<PreprocessReport, PipelineError> {
    let reports: Vec<PreprocessReport> = pool(jobs)?.install(|| {
        graphs
            .par_iter_mut()
            .map(|g| {
                if g.preprocessed {
                    PreprocessReport::default()
                } else {
                    preprocess(g, config, &lexicon.contradictions, &lexicon.taxonomy)
                }
            })
            .collect()
    });
    let mut total = PreprocessReport::default();
    for r in reports {
        total += r;
    }
    Ok(total)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub images: usize,
    pub records: usize,
    pub perturbed: usize,
}

/// Generates questions for `graphs` on `jobs` workers and feeds them to
/// `sink` in image order. Graphs that are not yet preprocessed are cleaned
/// on a private copy first, so the result equals running the two stages
/// separately.
pub fn generate_corpus<F>(
    graphs: &[SceneGraph],
    engine: &QuestionEngine,
    preprocess_config: &PreprocessConfig,
    seeds: &SeedStream,
    jobs: usize,
    mut sink: F,
) -> Result<GenerateSummary, PipelineError>
where
    F: FnMut(QuestionRecord) -> Result<(), PipelineError>,
{
    let pool = pool(jobs)?;
    let mut summary = GenerateSummary::default();
    let lexicon = engine.lexicon();
    for chunk in graphs.chunks(CHUNK) {
        let batches: Vec<Vec<QuestionRecord>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|g| {
                    if g.preprocessed {
                        engine.generate_image(g, seeds)
                    } else {
                        let mut clean = g.clone();
                        preprocess(&mut clean, preprocess_config, &lexicon.contradictions, &lexicon.taxonomy);
                        engine.generate_image(&clean, seeds)
                    }
                })
                .collect()
        });
        for batch in batches {
            summary.images += 1;
            for q in batch {
                summary.records += 1;
                summary.perturbed += usize::from(q.perturbation.is_some());
                sink(q)?;
            }
        }
    }
    Ok(summary)
}

/// Writes one JSON object per line.
pub fn write_jsonl<'a, W: Write, I: IntoIterator<Item = &'a QuestionRecord>>(
    records: I,
    mut out: W,
) -> Result<usize, PipelineError> {
    let mut n = 0;
    for q in records {
        write_record(q, &mut out)?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

pub fn write_record<W: Write>(q: &QuestionRecord, out: &mut W) -> Result<(), PipelineError> {
    serde_json::to_writer(&mut *out, q).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Streams records from JSONL, skipping blank lines.
pub fn read_jsonl<R: BufRead>(input: R) -> impl Iterator<Item = Result<QuestionRecord, PipelineError>> {
    input.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(PipelineError::Io(e))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(
            serde_json::from_str(&l).map_err(|e| PipelineError::Record { line: i + 1, message: e.to_string() }),
        ),
    })
}

pub fn read_all_jsonl<R: BufRead>(input: R) -> Result<Vec<QuestionRecord>, PipelineError> {
    read_jsonl(input).collect()
}

/// Single-pass statistics over a record stream.
pub fn compute_stats<I: IntoIterator<Item = Result<QuestionRecord, PipelineError>>>(
    records: I,
) -> Result<StatsAccumulator, PipelineError> {
    let mut acc = StatsAccumulator::default();
    for q in records {
        acc.add(&q?);
    }
    Ok(acc)
}
