use super::ScoringModel;
use crate::error::{Error, Result};
use crate::numcore::{norm, DenseVector};

/// Partials of `½(ŷ − s)²` for a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    /// `K × M`, one row per basis vector.
    pub centroids: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub scale: f64,
    /// `D × M`, row-major like the projection itself.
    pub projection: Vec<f64>,
    pub prediction: f64,
}

impl ScoreGradients {
    pub fn zeros(k: usize, d: usize, m: usize) -> Self {
        Self {
            centroids: vec![vec![0.0; m]; k],
            scores: vec![0.0; k],
            scale: 0.0,
            projection: vec![0.0; d * m],
            prediction: 0.0,
        }
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &ScoreGradients, c: f64) {
        for (a, b) in self.centroids.iter_mut().zip(&other.centroids) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        for (x, y) in self.scores.iter_mut().zip(&other.scores) {
            *x += c * y;
        }
        self.scale += c * other.scale;
        for (x, y) in self.projection.iter_mut().zip(&other.projection) {
            *x += c * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.centroids.iter().flatten().all(|v| v.is_finite())
            && self.scores.iter().all(|v| v.is_finite())
            && self.scale.is_finite()
            && self.projection.iter().all(|v| v.is_finite())
    }
}

/// Analytic gradient of `½(ŷ − target)²` with respect to the basis vectors,
/// basis scores, softmax scale and projection matrix.
pub fn score_gradients(model: &ScoringModel, x: &DenseVector, target: f64) -> Result<ScoreGradients> {
    let y = model.adapt(x.as_slice())?;
    gradients_from_adapted(model, &y, target, true)
}

pub(crate) fn gradients_from_adapted(
    model: &ScoringModel,
    y: &[f64],
    target: f64,
    with_projection: bool,
) -> Result<ScoreGradients> {
    let centered: Vec<f64> = y.iter().zip(model.pca.mean.as_slice()).map(|(a, m)| a - m).collect();
    let z = model.pca.projection.matvec_t(&centered)?;
    gradients_from_projected(model, &z, &centered, target, with_projection)
}

pub(crate) fn gradients_from_projected(
    model: &ScoringModel,
    z: &[f64],
    centered: &[f64],
    target: f64,
    with_projection: bool,
) -> Result<ScoreGradients> {
    let (pred, w) = model.predict_projected(z)?;
    let k = model.k();
    let m = z.len();
    let z_norm = norm(z);
    let z_hat: Vec<f64> = z.iter().map(|v| v / z_norm).collect();
    let r = pred - target;
    let alpha = model.softmax_scale;

    let mut g = ScoreGradients::zeros(k, if with_projection { centered.len() } else { 0 }, m);
    g.prediction = pred;
    let mut gz = vec![0.0; m];
    for i in 0..k {
        let mu = model.basis.centroids[i].as_slice();
        let mu_norm = norm(mu);
        if mu_norm == 0.0 {
            return Err(Error::DegenerateInput(format!("basis vector {i} has zero norm")));
        }
        let c: f64 = mu.iter().zip(&z_hat).map(|(a, b)| a * b).sum::<f64>() / mu_norm;
        let f = model.basis.scores[i];
        g.scores[i] = r * w[i];
        g.scale += r * w[i] * (f - pred) * c;
        // dL/dc_i
        let gc = r * w[i] * (f - pred) * alpha;
        for j in 0..m {
            let mu_hat = mu[j] / mu_norm;
            g.centroids[i][j] = gc * (z_hat[j] - c * mu_hat) / mu_norm;
            gz[j] += gc * (mu_hat - c * z_hat[j]) / z_norm;
        }
    }
    if with_projection {
        for (d, cd) in centered.iter().enumerate() {
            for j in 0..m {
                g.projection[d * m + j] = cd * gz[j];
            }
        }
    }
    Ok(g)
}
