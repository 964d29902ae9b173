//! Monotone 4-parameter logistic remapping of predictions onto the label
//! scale, fitted by Levenberg-Marquardt.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};

/// `q(x) = lo + (hi − lo) / (1 + exp(−(x − mid) / width))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic4 {
    pub hi: f64,
    pub lo: f64,
    pub mid: f64,
    pub width: f64,
}

impl Logistic4 {
    pub fn eval(&self, x: f64) -> f64 {
        self.lo + (self.hi - self.lo) / (1.0 + (-(x - self.mid) / self.width).exp())
    }

    fn params(&self) -> Vector4<f64> {
        Vector4::new(self.hi, self.lo, self.mid, self.width)
    }

    fn from_params(p: &Vector4<f64>) -> Self {
        Self {
            hi: p[0],
            lo: p[1],
            mid: p[2],
            width: p[3].abs().max(1e-9),
        }
    }

    /// Residuals `q(x) − y` and their Jacobian.
    fn residuals(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<Vector4<f64>>) {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let s = 1.0 / (1.0 + (-(xi - self.mid) / self.width).exp());
                let ds = s * (1.0 - s);
                let amp = self.hi - self.lo;
                let r = self.lo + amp * s - yi;
                let j = Vector4::new(
                    s,
                    1.0 - s,
                    -amp * ds / self.width,
                    -amp * ds * (xi - self.mid) / (self.width * self.width),
                );
                (r, j)
            })
            .unzip()
    }
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn fit_logistic4(pred: &[f64], truth: &[f64]) -> Result<Logistic4> {
    if pred.len() != truth.len() {
        return Err(Error::dim(pred.len(), truth.len()));
    }
    if pred.len() < 4 {
        return Err(Error::Param("logistic fit needs at least 4 points".into()));
    }
    let n = pred.len() as f64;
    let mean = pred.iter().sum::<f64>() / n;
    let sd = (pred.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateInput("logistic fit of constant predictions".into()));
    }
    let mut model = Logistic4 {
        hi: truth.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lo: truth.iter().copied().fold(f64::INFINITY, f64::min),
        mid: mean,
        width: sd,
    };
    let (mut r, mut jac) = model.residuals(pred, truth);
    let mut cost = sse(&r);
    let mut damping = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (ri, ji) in r.iter().zip(&jac) {
            jtj += ji * ji.transpose();
            jtr += ji * *ri;
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += damping * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                damping *= 10.0;
                continue;
            };
            let candidate = Logistic4::from_params(&(model.params() - step));
            let (cr, cj) = candidate.residuals(pred, truth);
            let c = sse(&cr);
            if c.is_finite() && c < cost {
                let done = (cost - c) <= 1e-12 * cost.max(1e-300);
                model = candidate;
                r = cr;
                jac = cj;
                cost = c;
                damping = (damping / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(model)
}
