//! Error/confidence agreement: Pearson correlation, overall MAE and tail MAEs.
//!
//! Test rows are ranked by confidence distance, ascending. The lowest tail is
//! the most reliable fraction of predictions, the highest tail the least
//! reliable.

use std::fmt::Write as _;

use crate::confidence::{ConfidenceReport, LatentSet, Space};
use crate::error::{Error, Result};

/// Sample Pearson correlation. `Ok(None)` when either vector has zero variance.
pub fn pearson(c: &[f64], e: &[f64]) -> Result<Option<f64>> {
    if c.len() != e.len() {
        return Err(Error::LengthMismatch {
            what: "pearson inputs",
            left: c.len(),
            right: e.len(),
        });
    }
    if c.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two samples".into(),
        ));
    }
    let n = c.len() as f64;
    let mc = c.iter().sum::<f64>() / n;
    let me = e.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in c.iter().zip(e) {
        let dx = x - mc;
        let dy = y - me;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

pub fn mae(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "mae inputs",
            left: pred.len(),
            right: y.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// Smallest distances: most reliable.
    Lowest,
    /// Largest distances: least reliable.
    Highest,
}

/// `floor(fraction · n)`, tolerant of products that land a hair below an integer.
pub fn tail_size(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {fraction} must lie in (0, 0.5]"
        )));
    }
    let k = (fraction * n as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Err(Error::EmptySelection { fraction, n });
    }
    Ok(k)
}

/// Indices sorted by score ascending; ties keep their original order.
pub fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

fn tail_indices(scores: &[f64], fraction: f64, tail: Tail) -> Result<Vec<usize>> {
    let k = tail_size(fraction, scores.len())?;
    let order = rank_ascending(scores);
    Ok(match tail {
        Tail::Lowest => order[..k].to_vec(),
        Tail::Highest => order[order.len() - k..].to_vec(),
    })
}

/// Mean absolute error over the lowest- or highest-scored `floor(fraction · n)` rows.
pub fn tail_mae(scores: &[f64], errors: &[f64], fraction: f64, tail: Tail) -> Result<f64> {
    if scores.len() != errors.len() {
        return Err(Error::LengthMismatch {
            what: "tail_mae inputs",
            left: scores.len(),
            right: errors.len(),
        });
    }
    let idx = tail_indices(scores, fraction, tail)?;
    Ok(idx.iter().map(|&i| errors[i].abs()).sum::<f64>() / idx.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub overall_mae: f64,
    pub mae_most_reliable: f64,
    pub mae_most_unreliable: f64,
    pub fraction: f64,
    pub tail_count: usize,
    /// `None` when scores or errors have zero variance.
    pub correlation: Option<f64>,
    pub space: Space,
    pub m: usize,
    pub threshold: f64,
}

impl EvalReport {
    /// Metrics from aligned scores and absolute errors.
    pub fn from_scores(
        scores: &[f64],
        errors: &[f64],
        fraction: f64,
        space: Space,
        m: usize,
        threshold: f64,
    ) -> Result<Self> {
        if scores.len() != errors.len() {
            return Err(Error::LengthMismatch {
                what: "scores vs errors",
                left: scores.len(),
                right: errors.len(),
            });
        }
        if scores.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = scores.len();
        Ok(Self {
            n,
            overall_mae: errors.iter().map(|e| e.abs()).sum::<f64>() / n as f64,
            mae_most_reliable: tail_mae(scores, errors, fraction, Tail::Lowest)?,
            mae_most_unreliable: tail_mae(scores, errors, fraction, Tail::Highest)?,
            fraction,
            tail_count: tail_size(fraction, n)?,
            correlation: pearson(scores, errors)?,
            space,
            m,
            threshold,
        })
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "space={}", self.space);
        let _ = writeln!(s, "M={}", self.m);
        let _ = writeln!(s, "T={}", self.threshold);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "fraction={}", self.fraction);
        let _ = writeln!(s, "tail_count={}", self.tail_count);
        let _ = writeln!(s, "overall_mae={}", self.overall_mae);
        let _ = writeln!(s, "mae_most_reliable={}", self.mae_most_reliable);
        let _ = writeln!(s, "mae_most_unreliable={}", self.mae_most_unreliable);
        let _ = writeln!(s, "correlation={}", fmt_correlation(self.correlation));
        s
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "space",
        "M",
        "T",
        "n",
        "fraction",
        "tail_count",
        "overall_mae",
        "mae_most_reliable",
        "mae_most_unreliable",
        "correlation",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.space.to_string(),
            self.m.to_string(),
            self.threshold.to_string(),
            self.n.to_string(),
            self.fraction.to_string(),
            self.tail_count.to_string(),
            self.overall_mae.to_string(),
            self.mae_most_reliable.to_string(),
            self.mae_most_unreliable.to_string(),
            fmt_correlation(self.correlation),
        ]
    }
}

fn fmt_correlation(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), |r| r.to_string())
}

/// Assembles the report for one scoring run; `conf` and `test` must list the same ids in the same order.
pub fn build_report(conf: &ConfidenceReport, test: &LatentSet, fraction: f64) -> Result<EvalReport> {
    if conf.ids.len() != test.ids.len() {
        return Err(Error::IdMismatch(format!(
            "{} scores for {} test rows",
            conf.ids.len(),
            test.ids.len()
        )));
    }
    if let Some((a, b)) = conf.ids.iter().zip(&test.ids).find(|(a, b)| a != b) {
        return Err(Error::IdMismatch(format!("score id `{a}` vs test id `{b}`")));
    }
    EvalReport::from_scores(
        &conf.scores,
        test.errors()?,
        fraction,
        conf.space,
        conf.m,
        conf.threshold,
    )
}
