//! Symmetric InfoNCE over a batch of (image, text) pairs.
//!
//! With `y_p = W·x_p + b`, `c_pq = cos(y_p, t_q)` and `S = c / τ`,
//!
//! ```text
//! L_i2t = mean_p [ logsumexp_q S_pq − S_pp ]
//! L_t2i = mean_q [ logsumexp_p S_pq − S_qq ]
//! L     = (L_i2t + L_t2i) / 2
//! ```
//!
//! and `∂L/∂S_pq = (P_row[p][q] + P_col[p][q] − 2δ_pq) / 2B`, where the two
//! `P` matrices are the row- and column-wise softmaxes of `S`.

use log::warn;

use super::AlignmentAdapter;
use crate::error::{Error, Result};
use crate::numcore::{check_dim, dot, log_sum_exp, norm, DenseVector};

/// Gradient of the loss with respect to every adapter parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradients {
    /// Row-major `D × D`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub log_temperature: f64,
}

impl AdapterGradients {
    fn zeros(d: usize) -> Self {
        Self {
            weight: vec![0.0; d * d],
            bias: vec![0.0; d],
            log_temperature: 0.0,
        }
    }

    /// Weight, then bias, then log-temperature.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.weight.clone();
        v.extend_from_slice(&self.bias);
        v.push(self.log_temperature);
        v
    }
}

#[derive(Debug, Clone)]
pub struct ContrastiveLoss {
    pub loss: f64,
    pub gradients: AdapterGradients,
    /// Every text in the batch was identical; the loss carries no signal.
    pub degenerate: bool,
}

pub fn contrastive_loss(
    adapter: &AlignmentAdapter,
    batch: &[(&DenseVector, &DenseVector)],
) -> Result<ContrastiveLoss> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::Param(format!("contrastive batch needs at least 2 pairs, got {b}")));
    }
    let d = adapter.dim();
    let tau = adapter.temperature();

    let mut ys = Vec::with_capacity(b);
    let mut y_norms = Vec::with_capacity(b);
    let mut t_hats: Vec<Vec<f64>> = Vec::with_capacity(b);
    for (x, t) in batch {
        check_dim(d, x.dim())?;
        check_dim(d, t.dim())?;
        let y = adapter.apply_slice(x.as_slice())?;
        let ny = norm(&y);
        let nt = t.norm();
        if ny == 0.0 || nt == 0.0 {
            return Err(Error::DegenerateInput(
                "zero-norm adapted image or text embedding in batch".into(),
            ));
        }
        ys.push(y.iter().map(|v| v / ny).collect::<Vec<_>>());
        y_norms.push(ny);
        t_hats.push(t.as_slice().iter().map(|v| v / nt).collect());
    }

    let degenerate = batch.windows(2).all(|w| w[0].1 == w[1].1);
    if degenerate {
        warn!("contrastive batch of {b} pairs has identical texts; loss carries no signal");
    }

    // cosine and logit matrices
    let mut cos = vec![0.0; b * b];
    let mut logits = vec![0.0; b * b];
    for p in 0..b {
        for q in 0..b {
            let c = dot(&ys[p], &t_hats[q]);
            cos[p * b + q] = c;
            logits[p * b + q] = c / tau;
        }
    }

    let mut row_lse = vec![0.0; b];
    let mut col_lse = vec![0.0; b];
    let mut col_buf = vec![0.0; b];
    for p in 0..b {
        row_lse[p] = log_sum_exp(&logits[p * b..(p + 1) * b]);
    }
    for q in 0..b {
        for p in 0..b {
            col_buf[p] = logits[p * b + q];
        }
        col_lse[q] = log_sum_exp(&col_buf);
    }
    let bf = b as f64;
    let l_i2t = (0..b).map(|p| row_lse[p] - logits[p * b + p]).sum::<f64>() / bf;
    let l_t2i = (0..b).map(|q| col_lse[q] - logits[q * b + q]).sum::<f64>() / bf;
    let loss = 0.5 * (l_i2t + l_t2i);

    let mut grads = AdapterGradients::zeros(d);
    let mut g_y = vec![0.0; d];
    for p in 0..b {
        g_y.iter_mut().for_each(|v| *v = 0.0);
        let mut radial = 0.0;
        for q in 0..b {
            let s = logits[p * b + q];
            let p_row = (s - row_lse[p]).exp();
            let p_col = (s - col_lse[q]).exp();
            let delta = if p == q { 2.0 } else { 0.0 };
            let g_s = (p_row + p_col - delta) / (2.0 * bf);
            grads.log_temperature -= g_s * s;
            let g_c = g_s / tau;
            radial += g_c * cos[p * b + q];
            for (gy, th) in g_y.iter_mut().zip(&t_hats[q]) {
                *gy += g_c * th;
            }
        }
        // ∂cos(y, t)/∂y = (t̂ − cos·ŷ) / ‖y‖
        let inv = 1.0 / y_norms[p];
        for (gy, yh) in g_y.iter_mut().zip(&ys[p]) {
            *gy = (*gy - radial * yh) * inv;
        }
        let x = batch[p].0.as_slice();
        for (i, gy) in g_y.iter().enumerate() {
            grads.bias[i] += gy;
            let row = &mut grads.weight[i * d..(i + 1) * d];
            for (w, xj) in row.iter_mut().zip(x) {
                *w += gy * xj;
            }
        }
    }

    Ok(ContrastiveLoss {
        loss,
        gradients: grads,
        degenerate,
    })
}
