//! Deterministic synthetic corpus with a known quality direction.
//!
//! A unit direction `u` and an orthogonal `v` are derived from the seed.
//! Each record has a score `s ~ U[1, 5]` and
//!
//! ```text
//! image   = ((s − 3) / 2)·u + ε
//! text[k] = ((s − 3) / 2)·u + ε'_k
//! ```
//!
//! where the noise terms are independent Gaussians of scale `noise_sigma`
//! restricted to the orthogonal complement of `u` (so they cover `v` and the
//! complement of `span{u, v}`). Stored values are rounded to f32 precision.

use super::{EmbeddingDataset, SampleRecord, MAX_SCORE, MIN_SCORE};
use crate::error::{Error, Result};
use crate::numcore::{dot, norm, DenseVector, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub n_text_seeds: usize,
}

impl SyntheticSpec {
    pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;
    pub const DEFAULT_TEXT_SEEDS: usize = 4;

    pub fn new(n: usize, dim: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            seed,
            noise_sigma: Self::DEFAULT_NOISE_SIGMA,
            n_text_seeds: Self::DEFAULT_TEXT_SEEDS,
        }
    }
}

/// The seed-derived quality direction `u` and its orthogonal partner `v`.
#[derive(Debug, Clone)]
pub struct SyntheticDirections {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SyntheticDirections {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Param(format!(
                "synthetic data needs dimension >= 2, got {dim}"
            )));
        }
        let mut rng = Rng::substream(seed, "synth:directions");
        let u = loop {
            let g: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let n = norm(&g);
            if n > 1e-8 {
                break g.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        let v = loop {
            let mut g: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let p = dot(&g, &u);
            for (gi, ui) in g.iter_mut().zip(&u) {
                *gi -= p * ui;
            }
            let n = norm(&g);
            if n > 1e-8 {
                break g.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        Ok(Self { u, v })
    }

    /// `(s − 3) / 2`, the signed coefficient along `u` for score `s`.
    pub fn coefficient(score: f64) -> f64 {
        (score - 3.0) / 2.0
    }
}

fn noisy_point(rng: &mut Rng, u: &[f64], coeff: f64, sigma: f64) -> Vec<f64> {
    let mut out: Vec<f64> = u.iter().map(|x| coeff * x).collect();
    if sigma > 0.0 {
        let g: Vec<f64> = (0..u.len()).map(|_| rng.normal()).collect();
        let p = dot(&g, u);
        for ((o, gi), ui) in out.iter_mut().zip(&g).zip(u) {
            *o += sigma * (gi - p * ui);
        }
    }
    out
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<EmbeddingDataset> {
    if spec.n == 0 {
        return Err(Error::Param("synthetic dataset needs n >= 1".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Param(format!("noise_sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    let dirs = SyntheticDirections::new(spec.seed, spec.dim)?;
    let mut rng = Rng::substream(spec.seed, "synth:samples");
    let mut records = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let score = f64::from(rng.uniform(MIN_SCORE, MAX_SCORE) as f32).clamp(MIN_SCORE, MAX_SCORE);
        let coeff = SyntheticDirections::coefficient(score);
        let mut image = DenseVector::new(noisy_point(&mut rng, &dirs.u, coeff, spec.noise_sigma))?;
        image.quantize_f32();
        let text_embs = (0..spec.n_text_seeds)
            .map(|_| {
                let mut t = DenseVector::new(noisy_point(&mut rng, &dirs.u, coeff, spec.noise_sigma))?;
                t.quantize_f32();
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SampleRecord {
            id: format!("syn-{i:06}"),
            image_emb: image,
            text_embs,
            score,
        });
    }
    Ok(EmbeddingDataset::new(spec.dim, records)?
        .with_meta("source", "synthetic")
        .with_meta("creation_seed", spec.seed.to_string())
        .with_meta("noise_sigma", spec.noise_sigma.to_string()))
}
