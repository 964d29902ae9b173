//! Correlation metrics and dataset evaluation reports.

mod logistic;
mod report;

pub use logistic::{fit_logistic4, Logistic4};
pub use report::{evaluate, evaluate_with, format_table, EvalOptions, EvalReport, Predictor};

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::Param(format!("need at least 2 values, got {}", a.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in correlation input".into()));
    }
    Ok(())
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Spread no larger than a few ulps of the magnitude, i.e. a constant
/// sequence up to rounding.
fn is_constant(x: &[f64]) -> bool {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    hi - lo <= 8.0 * f64::EPSILON * lo.abs().max(hi.abs())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if is_constant(a) || is_constant(b) {
        return Err(Error::DegenerateInput("correlation of a constant sequence".into()));
    }
    let (da, db) = (centered(a), centered(b));
    let saa: f64 = da.iter().map(|v| v * v).sum();
    let sbb: f64 = db.iter().map(|v| v * v).sum();
    let sab: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson linear correlation.
pub fn plcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    pearson(pred, truth)
}

/// Spearman rank correlation, ties given their average rank.
pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    pearson(&fractional_ranks(pred), &fractional_ranks(truth))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::dim(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::Param("mse of empty sequences".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}
