//! Lloyd k-means with k-means++ seeding, run independently inside each
//! score bucket.

use rayon::prelude::*;

use super::buckets::BucketSpec;
use crate::error::{Error, Result};
use crate::numcore::{squared_distance, DenseVector, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the largest centroid shift falls below this.
    pub tol: f64,
    /// Independent k-means++ starts; the lowest final SSE wins.
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iters: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

/// Result of one Lloyd run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster SSE after every centroid update.
    pub objective_trace: Vec<f64>,
    /// Stopped because assignments stabilized or the shift fell below `tol`.
    pub converged: bool,
}

impl KMeansFit {
    pub fn objective(&self, points: &[&[f64]]) -> f64 {
        sse(points, &self.assignment, &self.centroids)
    }
}

fn sse(points: &[&[f64]], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Nearest centroid by squared Euclidean distance; ties go to the lower index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn kmeans_plus_plus(points: &[&[f64]], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target ≥ acc at the end; take the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.push(points[pick].to_vec());
        let c = centroids.last().unwrap();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(squared_distance(p, c));
        }
    }
    centroids
}

fn means(points: &[&[f64]], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(*p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    sums
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty(points: &[&[f64]], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut largest = 0;
        for j in 1..k {
            if counts[j] > counts[largest] {
                largest = j;
            }
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if assignment[i] == largest {
                let d = squared_distance(p, &centroids[largest]);
                if d > far_d {
                    far = Some(i);
                    far_d = d;
                }
            }
        }
        let far = far.expect("largest cluster is non-empty");
        assignment[far] = empty;
        centroids[empty] = points[far].to_vec();
    }
}

/// Lloyd iterations from a k-means++ start.
pub fn kmeans(points: &[&[f64]], k: usize, rng: &mut Rng, max_iters: usize, tol: f64) -> Result<KMeansFit> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Alloc(format!("cannot form {k} clusters from {n} points")));
    }
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut assignment: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters.max(1) {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &mut centroids);
        if assignment.as_ref() == Some(&next) {
            converged = true;
            break;
        }
        let updated = means(points, &next, k);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(sse(points, &next, &centroids));
        assignment = Some(next);
        if shift < tol {
            converged = true;
            break;
        }
    }
    let assignment = assignment.expect("at least one iteration runs");
    Ok(KMeansFit {
        centroids,
        assignment,
        objective_trace: trace,
        converged,
    })
}

/// Best of `cfg.n_init` runs drawn in sequence from `rng`; ties keep the
/// earlier run.
pub fn kmeans_restarts(points: &[&[f64]], k: usize, rng: &mut Rng, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let mut best: Option<(f64, KMeansFit)> = None;
    for _ in 0..cfg.n_init.max(1) {
        let fit = kmeans(points, k, rng, cfg.max_iters, cfg.tol)?;
        let obj = fit.objective(points);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, fit));
        }
    }
    Ok(best.expect("at least one run").1)
}

/// `K` basis vectors with their representative scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub centroids: Vec<DenseVector>,
    pub scores: Vec<f64>,
    /// Bucket each vector was fitted in (0 for unbucketed k-means).
    pub bucket_of: Vec<usize>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.centroids.first().map(DenseVector::dim)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.centroids.len();
        if self.scores.len() != k || self.bucket_of.len() != k {
            return Err(Error::Numeric(format!(
                "basis lengths disagree: {} centroids, {} scores, {} bucket ids",
                k,
                self.scores.len(),
                self.bucket_of.len()
            )));
        }
        if let Some(d) = self.dim() {
            for c in &self.centroids {
                if c.dim() != d {
                    return Err(Error::dim(d, c.dim()));
                }
            }
        }
        if self.centroids.iter().any(|c| !c.is_finite()) || self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("basis has non-finite entries".into()));
        }
        if let Some(i) = self.centroids.iter().position(|c| c.norm() == 0.0) {
            return Err(Error::DegenerateInput(format!("basis vector {i} has zero norm")));
        }
        Ok(())
    }

    pub fn quantize_f32(&mut self) {
        for c in &mut self.centroids {
            c.quantize_f32();
        }
        for s in &mut self.scores {
            *s = f64::from(*s as f32);
        }
    }
}

/// Per-bucket k-means output plus the Lloyd traces, one per non-empty bucket.
#[derive(Debug, Clone)]
pub struct BucketedKMeans {
    pub basis: BasisSet,
    pub fits: Vec<(usize, KMeansFit)>,
}

fn basis_from_fit(points: &[&[f64]], scores: &[f64], fit: &KMeansFit, bucket: usize, out: &mut BasisSet) -> Result<()> {
    let k = fit.centroids.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&a, &s) in fit.assignment.iter().zip(scores) {
        sums[a] += s;
        counts[a] += 1;
    }
    debug_assert_eq!(points.len(), scores.len());
    for j in 0..k {
        let c = DenseVector::new(fit.centroids[j].clone())?;
        if c.norm() == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "cluster {j} of bucket {bucket} has a zero centroid"
            )));
        }
        out.centroids.push(c);
        out.scores.push(sums[j] / counts[j] as f64);
        out.bucket_of.push(bucket);
    }
    Ok(())
}

/// Independent k-means in every bucket, `k_n` clusters in bucket `n`,
/// flattened over `(n, j)` in ascending order. Bucket `n` draws from
/// `Rng::substream(seed, "kmeans:bucket:n")`.
pub fn bucketed_kmeans(
    embeddings: &[Vec<f64>],
    scores: &[f64],
    spec: &BucketSpec,
    cfg: &KMeansConfig,
) -> Result<BucketedKMeans> {
    if embeddings.len() != scores.len() {
        return Err(Error::dim(embeddings.len(), scores.len()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.n_buckets];
    for (i, &s) in scores.iter().enumerate() {
        let b = spec
            .bucket_of(s)
            .ok_or_else(|| Error::Param(format!("score {s} outside the bucket range")))?;
        members[b].push(i);
    }
    for (n, m) in members.iter().enumerate() {
        if (m.is_empty()) != (spec.allocation[n] == 0) || spec.allocation[n] > m.len() {
            return Err(Error::Alloc(format!(
                "bucket {n} holds {} samples but is allocated {} clusters",
                m.len(),
                spec.allocation[n]
            )));
        }
    }

    let fits: Vec<(usize, KMeansFit)> = (0..spec.n_buckets)
        .into_par_iter()
        .filter(|&n| spec.allocation[n] > 0)
        .map(|n| {
            let pts: Vec<&[f64]> = members[n].iter().map(|&i| embeddings[i].as_slice()).collect();
            let mut rng = Rng::substream(cfg.seed, &format!("kmeans:bucket:{n}"));
            kmeans_restarts(&pts, spec.allocation[n], &mut rng, cfg).map(|f| (n, f))
        })
        .collect::<Result<_>>()?;

    let mut basis = BasisSet {
        centroids: Vec::new(),
        scores: Vec::new(),
        bucket_of: Vec::new(),
    };
    for (n, fit) in &fits {
        let pts: Vec<&[f64]> = members[*n].iter().map(|&i| embeddings[i].as_slice()).collect();
        let sc: Vec<f64> = members[*n].iter().map(|&i| scores[i]).collect();
        basis_from_fit(&pts, &sc, fit, *n, &mut basis)?;
    }
    Ok(BucketedKMeans { basis, fits })
}

/// One global k-means over all samples, ignoring score buckets.
pub fn plain_kmeans(embeddings: &[Vec<f64>], scores: &[f64], k: usize, cfg: &KMeansConfig) -> Result<BucketedKMeans> {
    if embeddings.len() != scores.len() {
        return Err(Error::dim(embeddings.len(), scores.len()));
    }
    let pts: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
    let mut rng = Rng::substream(cfg.seed, "kmeans:global");
    let fit = kmeans_restarts(&pts, k, &mut rng, cfg)?;
    let mut basis = BasisSet {
        centroids: Vec::new(),
        scores: Vec::new(),
        bucket_of: Vec::new(),
    };
    basis_from_fit(&pts, scores, &fit, 0, &mut basis)?;
    Ok(BucketedKMeans {
        basis,
        fits: vec![(0, fit)],
    })
}
