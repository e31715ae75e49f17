//! Plot-ready tables built from evaluation reports and metrics streams.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::MILESTONE_COUNT;
use crate::trainer::{mean_std, EvalReport};

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Half-width `1.96 · std / √n` of the 95% interval; `None` below two samples.
pub fn ci_half_width(std: f64, n: usize) -> Option<f64> {
    (n >= 2).then(|| Z95 * std / (n as f64).sqrt())
}

/// One evaluated run: a suite row trained with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub row: String,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub row: String,
    pub seeds: usize,
    /// Mean over seeds of the per-seed mean score.
    pub mean: f64,
    pub std: f64,
    pub ci95: Option<f64>,
    /// Best per-seed mean.
    pub best: f64,
    /// Highest single-episode score.
    pub max: f64,
    /// Per-milestone frequency averaged over seeds.
    pub reward_frequency: Vec<f64>,
}

impl RowSummary {
    /// Interval `mean ± ci95`, collapsed to the mean for a single seed.
    pub fn interval(&self) -> (f64, f64) {
        let h = self.ci95.unwrap_or(0.0);
        (self.mean - h, self.mean + h)
    }
}

/// Groups results by row (in order of first appearance) and summarizes across seeds.
pub fn summarize(results: &[SeedResult]) -> Vec<RowSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.row.as_str()) {
            order.push(&r.row);
        }
    }
    order
        .into_iter()
        .map(|row| {
            let runs: Vec<&SeedResult> = results.iter().filter(|r| r.row == row).collect();
            let means: Vec<f64> = runs.iter().map(|r| r.report.mean).collect();
            let (mean, std) = mean_std(&means);
            let mut freq = vec![0.0; MILESTONE_COUNT];
            for r in &runs {
                for (f, x) in freq.iter_mut().zip(&r.report.reward_frequency) {
                    *f += x / runs.len() as f64;
                }
            }
            RowSummary {
                row: row.to_string(),
                seeds: runs.len(),
                mean,
                std,
                ci95: ci_half_width(std, runs.len()),
                best: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                max: runs.iter().map(|r| r.report.max).fold(f64::NEG_INFINITY, f64::max),
                reward_frequency: freq,
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn ablation_csv(rows: &[RowSummary]) -> String {
    let mut s = String::from("row,seeds,mean,std,ci95,best,max\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{},{:.6},{:.6}",
            r.row,
            r.seeds,
            r.mean,
            r.std,
            opt(r.ci95),
            r.best,
            r.max
        );
    }
    s
}

pub fn frequency_csv(rows: &[RowSummary]) -> String {
    let mut s = String::from("row");
    for k in 0..MILESTONE_COUNT {
        let _ = write!(s, ",m{k}");
    }
    s.push('\n');
    for r in rows {
        s.push_str(&r.row);
        for f in &r.reward_frequency {
            let _ = write!(s, ",{f:.6}");
        }
        s.push('\n');
    }
    s
}

/// One seed's learning curve as (frame, value) points in frame order.
pub type Curve = Vec<(u64, f64)>;

/// Value of `curve` at `frame`: the last point at or before it.
fn value_at(curve: &Curve, frame: u64) -> Option<f64> {
    curve.iter().take_while(|(f, _)| *f <= frame).last().map(|(_, v)| *v)
}

/// Learning-curve table on `points` evenly spaced frames up to `budget`, one block per row.
/// Returns the CSV and warnings for rows whose intervals cannot be computed.
pub fn learning_curve_csv(rows: &[(String, Vec<Curve>)], budget: u64, points: usize) -> (String, Vec<String>) {
    let mut s = String::from("row,frame,seeds,mean,ci_low,ci_high\n");
    let mut warnings = Vec::new();
    let points = points.max(1);
    for (row, curves) in rows {
        if curves.len() < 2 {
            warnings.push(format!("{row}: {} seed(s), confidence interval left empty", curves.len()));
        }
        for i in 1..=points {
            let frame = budget * i as u64 / points as u64;
            let vals: Vec<f64> = curves.iter().filter_map(|c| value_at(c, frame)).collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            let (lo, hi) = match ci_half_width(std, vals.len()) {
                Some(h) => (format!("{:.6}", mean - h), format!("{:.6}", mean + h)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(s, "{row},{frame},{},{mean:.6},{lo},{hi}", vals.len());
        }
    }
    (s, warnings)
}
