//! Corpus statistics with exact, mergeable accumulators.
//!
//! All tracked quantities are small integers, so sums and sums of squares are
//! kept exactly and the order in which records arrive cannot change the
//! result.

use crate::question::QuestionRecord;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// z for a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub sum: u128,
    pub sum_sq: u128,
}

impl Accumulator {
    pub fn add(&mut self, x: u64) {
        self.count += 1;
        self.sum += x as u128;
        self.sum_sq += (x as u128) * (x as u128);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn summary(&self) -> Summary {
        let n = self.count;
        if n == 0 {
            return Summary { count: 0, mean: None, sd: None, ci_low: None, ci_high: None, status: SummaryStatus::Empty };
        }
        let mean = self.sum as f64 / n as f64;
        if n == 1 {
            return Summary {
                count: 1,
                mean: Some(mean),
                sd: None,
                ci_low: Some(mean),
                ci_high: Some(mean),
                status: SummaryStatus::Degenerate,
            };
        }
        // n·Σx² − (Σx)² is exact in integers and never negative.
        let n128 = n as u128;
        let spread = n128 * self.sum_sq - self.sum * self.sum;
        let var = spread as f64 / (n128 * (n128 - 1)) as f64;
        let sd = var.sqrt();
        let half = Z_95 * sd / (n as f64).sqrt();
        Summary {
            count: n,
            mean: Some(mean),
            sd: Some(sd),
            ci_low: Some(mean - half),
            ci_high: Some(mean + half),
            status: SummaryStatus::Ok,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStatus {
    Ok,
    /// A single observation: no spread estimate, zero-width interval.
    Degenerate,
    Empty,
}

/// Mean with sample standard deviation and a 95% normal interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub status: SummaryStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metric {
    pub acc: Accumulator,
    pub histogram: BTreeMap<u64, u64>,
}

impl Metric {
    pub fn add(&mut self, x: u64) {
        self.acc.add(x);
        *self.histogram.entry(x).or_default() += 1;
    }

    pub fn merge(&mut self, other: &Metric) {
        self.acc.merge(&other.acc);
        for (k, v) in &other.histogram {
            *self.histogram.entry(*k).or_default() += v;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub hops: Metric,
    pub objects: Metric,
    pub length: Metric,
}

impl GroupStats {
    fn add(&mut self, q: &QuestionRecord) {
        self.hops.add(q.n_hops as u64);
        self.objects.add(q.n_objects as u64);
        self.length.add(q.length_tokens as u64);
    }

    fn merge(&mut self, other: &GroupStats) {
        self.hops.merge(&other.hops);
        self.objects.merge(&other.objects);
        self.length.merge(&other.length);
    }
}

/// Streaming accumulator over question records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsAccumulator {
    pub overall: GroupStats,
    pub by_reasoning_type: BTreeMap<String, GroupStats>,
    pub by_res_type: BTreeMap<String, u64>,
    pub by_attribute: BTreeMap<String, u64>,
    pub by_attr_rel_type: BTreeMap<String, u64>,
    pub by_perturbation: BTreeMap<String, u64>,
    pub problematic: u64,
}

impl StatsAccumulator {
    pub fn add(&mut self, q: &QuestionRecord) {
        self.overall.add(q);
        self.by_reasoning_type.entry(q.reasoning_type.to_string()).or_default().add(q);
        *self.by_res_type.entry(q.labels.res_type.clone()).or_default() += 1;
        let attr = q.attribute.map(|a| a.key().to_string()).unwrap_or_else(|| "none".into());
        *self.by_attribute.entry(attr).or_default() += 1;
        *self.by_attr_rel_type.entry(q.labels.attr_rel_type.clone()).or_default() += 1;
        let pert = q.perturbation.as_ref().map(|p| p.kind.to_string()).unwrap_or_else(|| "none".into());
        *self.by_perturbation.entry(pert).or_default() += 1;
        if q.is_problematic {
            self.problematic += 1;
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.overall.merge(&other.overall);
        for (k, v) in &other.by_reasoning_type {
            self.by_reasoning_type.entry(k.clone()).or_default().merge(v);
        }
        for (mine, theirs) in [
            (&mut self.by_res_type, &other.by_res_type),
            (&mut self.by_attribute, &other.by_attribute),
            (&mut self.by_attr_rel_type, &other.by_attr_rel_type),
            (&mut self.by_perturbation, &other.by_perturbation),
        ] {
            for (k, v) in theirs {
                *mine.entry(k.clone()).or_default() += v;
            }
        }
        self.problematic += other.problematic;
    }

    pub fn report(&self) -> StatsReport {
        let group = |g: &GroupStats| GroupReport {
            count: g.hops.acc.count,
            hops: MetricReport::of(&g.hops),
            objects: MetricReport::of(&g.objects),
            length: MetricReport::of(&g.length),
        };
        StatsReport {
            total: self.overall.hops.acc.count,
            problematic: self.problematic,
            overall: group(&self.overall),
            by_reasoning_type: self.by_reasoning_type.iter().map(|(k, v)| (k.clone(), group(v))).collect(),
            by_res_type: self.by_res_type.clone(),
            by_attribute: self.by_attribute.clone(),
            by_attr_rel_type: self.by_attr_rel_type.clone(),
            by_perturbation: self.by_perturbation.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub summary: Summary,
    pub histogram: BTreeMap<u64, u64>,
}

impl MetricReport {
    fn of(m: &Metric) -> Self {
        Self { summary: m.acc.summary(), histogram: m.histogram.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub count: u64,
    pub hops: MetricReport,
    pub objects: MetricReport,
    pub length: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: u64,
    pub problematic: u64,
    pub overall: GroupReport,
    pub by_reasoning_type: BTreeMap<String, GroupReport>,
    pub by_res_type: BTreeMap<String, u64>,
    pub by_attribute: BTreeMap<String, u64>,
    pub by_attr_rel_type: BTreeMap<String, u64>,
    pub by_perturbation: BTreeMap<String, u64>,
}

impl StatsReport {
    /// One row per (group, metric) with the summary columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,metric,count,mean,sd,ci_low,ci_high,status\n");
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut row = |group: &str, metric: &str, s: &Summary| {
            let status = match s.status {
                SummaryStatus::Ok => "ok",
                SummaryStatus::Degenerate => "degenerate",
                SummaryStatus::Empty => "empty",
            };
            let _ = writeln!(
                out,
                "{group},{metric},{},{},{},{},{},{status}",
                s.count,
                fmt(s.mean),
                fmt(s.sd),
                fmt(s.ci_low),
                fmt(s.ci_high)
            );
        };
        let groups = std::iter::once(("all", &self.overall))
            .chain(self.by_reasoning_type.iter().map(|(k, v)| (k.as_str(), v)));
        for (name, g) in groups {
            row(name, "hops", &g.hops.summary);
            row(name, "objects", &g.objects.summary);
            row(name, "length", &g.length.summary);
        }
        out
    }
}
