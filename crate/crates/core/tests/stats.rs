mod common;

use common::{clean_graphs, engine, generate};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgqa_core::pipeline::compute_stats;
use sgqa_core::question::QuestionRecord;
use sgqa_core::stats::{Accumulator, StatsAccumulator, SummaryStatus};
use sgqa_core::synth::SynthConfig;
use std::sync::OnceLock;

fn corpus() -> &'static [QuestionRecord] {
    static CORPUS: OnceLock<Vec<QuestionRecord>> = OnceLock::new();
    CORPUS.get_or_init(|| generate(&clean_graphs(23, 40, &SynthConfig::default()), &engine(), 23, 1))
}

fn two_pass(xs: &[u64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<u64>() as f64 / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

proptest! {
    #[test]
    fn streaming_matches_two_pass(xs in prop::collection::vec(0u64..1000, 2..300)) {
        let mut acc = Accumulator::default();
        xs.iter().for_each(|&x| acc.add(x));
        let s = acc.summary();
        let (mean, sd) = two_pass(&xs);
        prop_assert!((s.mean.unwrap() - mean).abs() < 1e-9);
        prop_assert!((s.sd.unwrap() - sd).abs() < 1e-6 * sd.max(1.0));
        let half = 1.96 * sd / (xs.len() as f64).sqrt();
        prop_assert!((s.ci_high.unwrap() - s.mean.unwrap() - half).abs() < 1e-6);
        prop_assert!(((s.mean.unwrap() - s.ci_low.unwrap()) - (s.ci_high.unwrap() - s.mean.unwrap())).abs() < 1e-9);
    }

    #[test]
    fn shards_merge_to_the_single_pass(seed in any::<u64>(), cut in 0usize..1000) {
        let records = corpus();
        let mut shuffled = records.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = cut % (records.len() + 1);
        let single = compute_stats(records.iter().cloned().map(Ok)).unwrap();
        let mut left = StatsAccumulator::default();
        shuffled[..cut].iter().for_each(|q| left.add(q));
        let mut right = StatsAccumulator::default();
        shuffled[cut..].iter().for_each(|q| right.add(q));
        left.merge(&right);
        prop_assert_eq!(&left, &single);
        let report = single.report();
        prop_assert_eq!(report.overall.hops.histogram.values().sum::<u64>(), records.len() as u64);
        prop_assert_eq!(report.overall.objects.histogram.values().sum::<u64>(), records.len() as u64);
    }
}

#[test]
fn small_examples() {
    let mut acc = Accumulator::default();
    for x in [1, 1, 2] {
        acc.add(x);
    }
    assert!((acc.summary().mean.unwrap() - 4.0 / 3.0).abs() < 1e-12);

    let mut one = Accumulator::default();
    one.add(7);
    let s = one.summary();
    assert_eq!(s.status, SummaryStatus::Degenerate);
    assert_eq!(s.ci_low, s.ci_high);

    let empty = StatsAccumulator::default().report();
    assert_eq!(empty.total, 0);
    assert_eq!(empty.overall.hops.summary.status, SummaryStatus::Empty);
    assert!(empty.overall.hops.summary.mean.is_none());
}
