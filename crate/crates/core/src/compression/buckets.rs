//! Equal-width score buckets over `[1, 5]` and the per-bucket cluster
//! allocation.
//!
//! Allocation is largest-remainder (Hamilton) apportionment of `k_total`
//! proportional to bucket population, with ties on the remainder going to
//! the lower bucket index, subject to `1 ≤ k_n ≤ |I_n|` for every
//! non-empty bucket and `k_n = 0` for empty ones. Buckets whose share
//! violates a bound are pinned to it and the rest is re-apportioned.

use crate::dataset::{EmbeddingDataset, MAX_SCORE, MIN_SCORE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketSpec {
    pub n_buckets: usize,
    /// Clusters per bucket, `k_n`.
    pub allocation: Vec<usize>,
    /// Samples per bucket in the fitting data.
    pub populations: Vec<usize>,
}

impl BucketSpec {
    pub fn k_effective(&self) -> usize {
        self.allocation.iter().sum()
    }

    /// Lower edge of bucket `n` (0-based).
    pub fn lower_edge(n_buckets: usize, n: usize) -> f64 {
        MIN_SCORE + (MAX_SCORE - MIN_SCORE) * n as f64 / n_buckets as f64
    }

    /// `[lo, hi)`, except the last bucket which is closed at 5.
    pub fn interval(&self, n: usize) -> (f64, f64) {
        (
            Self::lower_edge(self.n_buckets, n),
            Self::lower_edge(self.n_buckets, n + 1),
        )
    }

    pub fn bucket_of(&self, score: f64) -> Option<usize> {
        bucket_index(self.n_buckets, score)
    }
}

pub fn bucket_index(n_buckets: usize, score: f64) -> Option<usize> {
    if !(MIN_SCORE..=MAX_SCORE).contains(&score) || n_buckets == 0 {
        return None;
    }
    let width = MAX_SCORE - MIN_SCORE;
    let mut idx = (((score - MIN_SCORE) * n_buckets as f64 / width).floor() as usize).min(n_buckets - 1);
    // snap to the edge formula so membership agrees with `interval`
    while idx > 0 && score < BucketSpec::lower_edge(n_buckets, idx) {
        idx -= 1;
    }
    while idx + 1 < n_buckets && score >= BucketSpec::lower_edge(n_buckets, idx + 1) {
        idx += 1;
    }
    Some(idx)
}

pub fn make_buckets(dataset: &EmbeddingDataset, n_buckets: usize, k_total: usize) -> Result<BucketSpec> {
    make_buckets_for_scores(&dataset.scores(), n_buckets, k_total)
}

pub fn make_buckets_for_scores(scores: &[f64], n_buckets: usize, k_total: usize) -> Result<BucketSpec> {
    if n_buckets == 0 {
        return Err(Error::Param("n_buckets must be >= 1".into()));
    }
    let mut populations = vec![0usize; n_buckets];
    for &s in scores {
        let b = bucket_index(n_buckets, s)
            .ok_or_else(|| Error::Param(format!("score {s} outside [{MIN_SCORE}, {MAX_SCORE}]")))?;
        populations[b] += 1;
    }
    let allocation = allocate(&populations, k_total)?;
    Ok(BucketSpec {
        n_buckets,
        allocation,
        populations,
    })
}

/// Bounded largest-remainder apportionment; see module docs.
pub fn allocate(populations: &[usize], k_total: usize) -> Result<Vec<usize>> {
    let nonempty = populations.iter().filter(|&&p| p > 0).count();
    let total: usize = populations.iter().sum();
    if nonempty == 0 {
        return Err(Error::Alloc("no samples to cluster".into()));
    }
    if k_total < nonempty {
        return Err(Error::Alloc(format!(
            "k_total {k_total} is smaller than the {nonempty} non-empty buckets"
        )));
    }
    if k_total > total {
        return Err(Error::Alloc(format!(
            "k_total {k_total} exceeds the {total} samples available"
        )));
    }

    let n = populations.len();
    let mut pinned: Vec<Option<usize>> = populations
        .iter()
        .map(|&p| if p == 0 { Some(0) } else { None })
        .collect();
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| pinned[i].is_none()).collect();
        let seats = k_total - pinned.iter().flatten().sum::<usize>();
        let shares = hamilton(seats, &free.iter().map(|&i| populations[i]).collect::<Vec<_>>());

        let low: Vec<usize> = free
            .iter()
            .zip(&shares)
            .filter(|(_, &s)| s < 1)
            .map(|(&i, _)| i)
            .collect();
        if !low.is_empty() {
            for i in low {
                pinned[i] = Some(1);
            }
            continue;
        }
        let high: Vec<usize> = free
            .iter()
            .zip(&shares)
            .filter(|(&i, &s)| s > populations[i])
            .map(|(&i, _)| i)
            .collect();
        if !high.is_empty() {
            for i in high {
                pinned[i] = Some(populations[i]);
            }
            continue;
        }
        let mut out: Vec<usize> = pinned.iter().map(|p| p.unwrap_or(0)).collect();
        for (&i, &s) in free.iter().zip(&shares) {
            out[i] = s;
        }
        if out.iter().sum::<usize>() != k_total {
            return Err(Error::Alloc("allocation bounds are infeasible".into()));
        }
        return Ok(out);
    }
}

/// Largest-remainder apportionment of `seats` proportional to `weights`,
/// exact integer arithmetic, remainder ties to the lower index.
fn hamilton(seats: usize, weights: &[usize]) -> Vec<usize> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if weights.is_empty() {
        return vec![];
    }
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = seats as u128 * w as u128;
        out.push((num / total) as usize);
        rems.push((num % total, i));
    }
    let leftover = seats - out.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(leftover) {
        out[i] += 1;
    }
    out
}
