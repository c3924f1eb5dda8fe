//! Corpus balancing: overlap deduplication, then iterative downsampling until
//! every label cell has a bounded answer share and the attribute and
//! reasoning-type marginals are near uniform.

use crate::geometry::Ratio;
use crate::question::QuestionRecord;
use crate::rng::SeedStream;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// The fused balancing label of one record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BalanceKey {
    pub attr_rel_type: String,
    pub res_type: String,
    pub answer_key: String,
}

impl BalanceKey {
    pub fn of(q: &QuestionRecord) -> Self {
        Self {
            attr_rel_type: q.labels.attr_rel_type.clone(),
            res_type: q.labels.res_type.clone(),
            answer_key: q.labels.answer_key.clone(),
        }
    }

    pub fn cell(&self) -> (String, String) {
        (self.attr_rel_type.clone(), self.res_type.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceConfig {
    /// Largest share any one answer may hold within a label cell.
    pub max_answer_share: f64,
    /// Allowed relative deviation of each marginal count from the mean.
    pub marginal_tolerance: f64,
    /// Records must have strictly fewer tokens than this.
    pub max_tokens: usize,
    pub dedupe_overlap: bool,
    pub balance_attributes: bool,
    pub balance_reasoning_types: bool,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            max_answer_share: 0.5,
            marginal_tolerance: 0.2,
            max_tokens: 25,
            dedupe_overlap: true,
            balance_attributes: true,
            balance_reasoning_types: true,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.max_answer_share > 0.0 && self.max_answer_share <= 1.0) {
            errors.push(format!("max_answer_share {} is outside (0, 1]", self.max_answer_share));
        }
        if !(self.marginal_tolerance >= 0.0 && self.marginal_tolerance < 1.0) {
            errors.push(format!("marginal_tolerance {} is outside [0, 1)", self.marginal_tolerance));
        }
        if self.max_tokens == 0 {
            errors.push("max_tokens must be positive".into());
        }
        errors
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReport {
    pub attr_rel_type: String,
    pub res_type: String,
    pub before: BTreeMap<String, u64>,
    pub after: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub input: usize,
    pub rejected_length: usize,
    pub removed_overlap: usize,
    pub output: usize,
    pub iterations: usize,
    pub attributes_before: BTreeMap<String, u64>,
    pub attributes_after: BTreeMap<String, u64>,
    pub reasoning_before: BTreeMap<String, u64>,
    pub reasoning_after: BTreeMap<String, u64>,
    pub cells: Vec<CellReport>,
    /// Cells whose answer share could not be brought under the cap.
    pub warnings: Vec<String>,
}

fn priority(q: &QuestionRecord) -> (std::cmp::Reverse<usize>, std::cmp::Reverse<usize>, usize, &str) {
    (
        std::cmp::Reverse(q.n_objects),
        std::cmp::Reverse(q.n_hops),
        q.text.len(),
        q.question_id.as_str(),
    )
}

/// Drops records whose mentioned objects are a subset of a retained record
/// with the same image, label and answerability. Larger object sets win,
/// then more hops, then shorter text, then the smaller id.
pub fn dedupe_by_object_overlap(records: Vec<QuestionRecord>) -> Vec<QuestionRecord> {
    let mut groups: BTreeMap<(String, String, String, bool), Vec<usize>> = BTreeMap::new();
    for (i, q) in records.iter().enumerate() {
        groups
            .entry((q.image_id.clone(), q.labels.attr_rel_type.clone(), q.labels.res_type.clone(), q.is_problematic))
            .or_default()
            .push(i);
    }
    let sets: Vec<BTreeSet<String>> = records.iter().map(|q| q.mentioned_objects().into_iter().collect()).collect();
    let mut keep = vec![false; records.len()];
    for members in groups.values_mut() {
        members.sort_by(|&a, &b| priority(&records[a]).cmp(&priority(&records[b])));
        let mut kept: Vec<usize> = Vec::new();
        for &i in members.iter() {
            if !kept.iter().any(|&k| sets[i].is_subset(&sets[k])) {
                kept.push(i);
                keep[i] = true;
            }
        }
    }
    records.into_iter().zip(keep).filter_map(|(q, k)| k.then_some(q)).collect()
}

/// Largest per-answer level `l` with `l <= cap * sum(min(n, l))`, if any.
fn answer_level(counts: &[usize], cap: Ratio) -> Option<usize> {
    let max = *counts.iter().max()?;
    (1..=max).rev().find(|&l| {
        let total: usize = counts.iter().map(|&n| n.min(l)).sum();
        !cap.lt_fraction(l as u64, total as u64)
    })
}

/// Largest level `l` such that capping every count at `l` leaves all counts
/// within `tol` of their mean.
fn marginal_level(counts: &[usize], tol: Ratio) -> Option<usize> {
    let max = *counts.iter().max()?;
    let k = counts.len() as u128;
    (1..=max).rev().find(|&l| {
        let capped: Vec<u128> = counts.iter().map(|&n| n.min(l) as u128).collect();
        let total: u128 = capped.iter().sum();
        let (num, den) = (tol.numer() as u128, tol.denom() as u128);
        // |c - total/k| <= tol * total/k  <=>  |c*k - total| * den <= num * total
        capped.iter().all(|&c| (c * k).abs_diff(total) * den <= num * total)
    })
}

/// Keeps `level` records out of `ids` (chosen with `rng`) or all if there
/// are fewer.
fn downsample(ids: &[usize], level: usize, stream: &SeedStream, label: &str, alive: &mut [bool]) -> bool {
    if ids.len() <= level {
        return false;
    }
    let mut rng = stream.rng_for(label);
    let keep: BTreeSet<usize> = sample(&mut rng, ids.len(), level).into_iter().collect();
    for (pos, &id) in ids.iter().enumerate() {
        if !keep.contains(&pos) {
            alive[id] = false;
        }
    }
    true
}

/// Keeps `level` records out of `ids`, taking the removals from the largest
/// (cell, answer) buckets first. Small answers survive marginal trimming, so a
/// cell that met the answer cap keeps a mix of answers.
fn downsample_spread(
    records: &[QuestionRecord],
    ids: &[usize],
    level: usize,
    stream: &SeedStream,
    label: &str,
    alive: &mut [bool],
) -> bool {
    if ids.len() <= level {
        return false;
    }
    let mut buckets: BTreeMap<(&str, &str, &str), Vec<usize>> = BTreeMap::new();
    for &i in ids {
        let l = &records[i].labels;
        buckets.entry((&l.attr_rel_type, &l.res_type, &l.answer_key)).or_default().push(i);
    }
    let counts: Vec<usize> = buckets.values().map(Vec::len).collect();
    let filled = |w: usize| counts.iter().map(|&c| c.min(w)).sum::<usize>();
    // Highest water line whose fill does not exceed `level`.
    let (mut lo, mut hi) = (0, *counts.iter().max().expect("ids is nonempty"));
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if filled(mid) <= level {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let line = lo;
    let mut rng = stream.rng_for(label);
    let above: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] > line).collect();
    let extra: BTreeSet<usize> =
        sample(&mut rng, above.len(), level - filled(line)).into_iter().map(|k| above[k]).collect();
    for (b, members) in buckets.values().enumerate() {
        let quota = members.len().min(line) + usize::from(extra.contains(&b));
        if members.len() <= quota {
            continue;
        }
        let keep: BTreeSet<usize> = sample(&mut rng, members.len(), quota).into_iter().collect();
        for (pos, &id) in members.iter().enumerate() {
            if !keep.contains(&pos) {
                alive[id] = false;
            }
        }
    }
    true
}

fn counts_by<F: Fn(&QuestionRecord) -> Option<String>>(
    records: &[QuestionRecord],
    alive: &[bool],
    f: F,
) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, q) in records.iter().enumerate() {
        if alive[i] {
            if let Some(k) = f(q) {
                out.entry(k).or_default().push(i);
            }
        }
    }
    out
}

fn sizes(groups: &BTreeMap<String, Vec<usize>>) -> BTreeMap<String, u64> {
    groups.iter().map(|(k, v)| (k.clone(), v.len() as u64)).collect()
}

fn attribute_of(q: &QuestionRecord) -> Option<String> {
    q.attribute.map(|a| a.key().to_string())
}

fn reasoning_of(q: &QuestionRecord) -> Option<String> {
    Some(q.reasoning_type.to_string())
}

/// Balances `records`. The output is a subset of the input in ascending
/// `question_id` order; balancing it again returns it unchanged.
pub fn balance(
    records: Vec<QuestionRecord>,
    config: &BalanceConfig,
    seeds: &SeedStream,
) -> (Vec<QuestionRecord>, BalanceReport) {
    let mut report = BalanceReport { input: records.len(), ..Default::default() };
    let cap = Ratio::from_f64(config.max_answer_share).unwrap_or(Ratio::new(1, 1).expect("nonzero"));
    let tol = Ratio::from_f64(config.marginal_tolerance).unwrap_or(Ratio::new(0, 1).expect("nonzero"));

    let (mut records, long): (Vec<_>, Vec<_>) =
        records.into_iter().partition(|q| q.length_tokens < config.max_tokens);
    report.rejected_length = long.len();
    if config.dedupe_overlap {
        let before = records.len();
        records = dedupe_by_object_overlap(records);
        report.removed_overlap = before - records.len();
    }
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let mut alive = vec![true; records.len()];
    let cell_of = |q: &QuestionRecord| (q.labels.attr_rel_type.clone(), q.labels.res_type.clone());
    let mut cells_before: BTreeMap<(String, String), BTreeMap<String, u64>> = BTreeMap::new();
    for q in &records {
        *cells_before.entry(cell_of(q)).or_default().entry(q.labels.answer_key.clone()).or_default() += 1;
    }
    report.attributes_before = sizes(&counts_by(&records, &alive, attribute_of));
    report.reasoning_before = sizes(&counts_by(&records, &alive, reasoning_of));

    let mut infeasible: BTreeSet<(String, String)> = BTreeSet::new();
    loop {
        report.iterations += 1;
        let round = seeds.split(&format!("round-{}", report.iterations));
        let mut changed = false;

        let mut cells: BTreeMap<(String, String), BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for (i, q) in records.iter().enumerate() {
            if alive[i] {
                cells.entry(cell_of(q)).or_default().entry(q.labels.answer_key.clone()).or_default().push(i);
            }
        }
        for (cell, answers) in &cells {
            let counts: Vec<usize> = answers.values().map(Vec::len).collect();
            match answer_level(&counts, cap) {
                Some(level) => {
                    for (answer, ids) in answers {
                        let label = format!("answer/{}/{}/{}", cell.0, cell.1, answer);
                        changed |= downsample(ids, level, &round, &label, &mut alive);
                    }
                }
                None => {
                    infeasible.insert(cell.clone());
                }
            }
        }

        let marginals: [(bool, &str, fn(&QuestionRecord) -> Option<String>); 2] = [
            (config.balance_reasoning_types, "reasoning", reasoning_of),
            (config.balance_attributes, "attribute", attribute_of),
        ];
        for (enabled, name, key) in marginals {
            if !enabled {
                continue;
            }
            let groups = counts_by(&records, &alive, key);
            let counts: Vec<usize> = groups.values().map(Vec::len).collect();
            if let Some(level) = marginal_level(&counts, tol) {
                for (k, ids) in &groups {
                    changed |= downsample_spread(&records, ids, level, &round, &format!("{name}/{k}"), &mut alive);
                }
            }
        }
        if !changed {
            break;
        }
    }

    let out: Vec<QuestionRecord> = records.into_iter().zip(alive).filter_map(|(q, a)| a.then_some(q)).collect();
    let all_alive = vec![true; out.len()];
    report.attributes_after = sizes(&counts_by(&out, &all_alive, attribute_of));
    report.reasoning_after = sizes(&counts_by(&out, &all_alive, reasoning_of));
    let mut cells_after: BTreeMap<(String, String), BTreeMap<String, u64>> = BTreeMap::new();
    for q in &out {
        *cells_after.entry(cell_of(q)).or_default().entry(q.labels.answer_key.clone()).or_default() += 1;
    }
    report.cells = cells_before
        .into_iter()
        .map(|((attr_rel_type, res_type), before)| {
            let after = cells_after.remove(&(attr_rel_type.clone(), res_type.clone())).unwrap_or_default();
            CellReport { attr_rel_type, res_type, before, after }
        })
        .collect();
    for cell in &report.cells {
        let total: u64 = cell.after.values().sum();
        let top = cell.after.values().copied().max().unwrap_or(0);
        if total > 0 && cap.lt_fraction(top, total) {
            report.warnings.push(format!(
                "cell ({}, {}) kept as-is: {} of {} records share one answer, above the cap",
                cell.attr_rel_type, cell.res_type, top, total
            ));
        }
    }
    if !infeasible.is_empty() {
        log::warn!("{} cell(s) cannot meet the answer cap and were kept unchanged", report.warnings.len());
    }
    report.output = out.len();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_level_examples() {
        let half = Ratio::new(1, 2).unwrap();
        assert_eq!(answer_level(&[90, 10], half), Some(10));
        assert_eq!(answer_level(&[5, 5], half), Some(5));
        assert_eq!(answer_level(&[7], half), None);
        assert_eq!(answer_level(&[30, 10, 10], half), Some(20));
    }

    #[test]
    fn marginal_level_examples() {
        let tol = Ratio::new(1, 5).unwrap();
        assert_eq!(marginal_level(&[10, 10, 10], tol), Some(10));
        // with one class at 100 and thirteen at 10 the level must come down to 12
        let mut counts = vec![10; 13];
        counts.push(100);
        let l = marginal_level(&counts, tol).unwrap();
        assert_eq!(l, 12);
    }
}
