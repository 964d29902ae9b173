//! Brute-force reference computations for tests.
//!
//! Nothing here shares code with the engine: the finite-difference
//! gradients, exhaustive k-means partitions and O(n²) midranks are
//! computed from first principles so they can check the optimized paths.

/// Magnitude below which a gradient component is compared absolutely
/// rather than relatively.
pub const GRADIENT_FLOOR: f64 = 1e-8;

/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every
/// coordinate.
pub fn central_difference<F>(mut f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let plus = f(&x);
            x[i] = orig - h;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, GRADIENT_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
    (analytic - numeric).abs() / scale
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Within-cluster sum of squared distances to cluster means for a labeling.
pub fn partition_sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let c = counts[l] as f64;
            p.iter()
                .zip(&sums[l])
                .map(|(x, s)| (x - s / c).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Global minimum of the k-means objective over every partition of
/// `points` into exactly `k` non-empty clusters. Exponential; meant for
/// n ≤ 10.
pub fn exhaustive_kmeans_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    assert!(n <= 12, "exhaustive search is exponential");
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    // Restricted growth strings enumerate each set partition exactly once.
    fn recurse(
        i: usize,
        used: usize,
        k: usize,
        labels: &mut Vec<usize>,
        points: &[Vec<f64>],
        best: &mut f64,
    ) {
        let n = labels.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            if used == k {
                *best = best.min(partition_sse(points, labels, k));
            }
            return;
        }
        for l in 0..=used.min(k - 1) {
            labels[i] = l;
            recurse(i + 1, used.max(l + 1), k, labels, points, best);
        }
    }
    recurse(0, 0, k, &mut labels, points, &mut best);
    best
}

/// 1-based midranks by direct counting.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let equal = x.iter().filter(|&&xj| xj == xi).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation from the textbook two-pass formula.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|p| p[0] * p[0] + 3.0 * p[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn exhaustive_on_two_pairs() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 11.0].iter().map(|&x| vec![x]).collect();
        assert!((exhaustive_kmeans_optimum(&pts, 2) - 1.0).abs() < 1e-12);
        assert_eq!(exhaustive_kmeans_optimum(&pts, 4), 0.0);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }
}
