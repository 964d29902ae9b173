use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;

use super::gradients::{gradients_from_adapted, ScoreGradients};
use super::ScoringModel;
use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::numcore::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreTarget {
    Centroids,
    Scores,
    Pca,
    Scale,
}

impl ScoreTarget {
    pub const ALL: [ScoreTarget; 4] = [Self::Centroids, Self::Scores, Self::Pca, Self::Scale];

    pub fn name(self) -> &'static str {
        match self {
            Self::Centroids => "centroids",
            Self::Scores => "scores",
            Self::Pca => "pca",
            Self::Scale => "scale",
        }
    }
}

impl fmt::Display for ScoreTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Param(format!("unknown fine-tuning target {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFitConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_targets: BTreeSet<ScoreTarget>,
}

impl Default for ScoreFitConfig {
    fn default() -> Self {
        Self {
            lr: 3e-2,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            train_targets: [ScoreTarget::Centroids, ScoreTarget::Scores].into(),
        }
    }
}

impl ScoreFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Param(format!("scoring lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("scoring batch_size must be >= 1".into()));
        }
        if self.train_targets.is_empty() {
            return Err(Error::Param("no fine-tuning targets selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScoreFitRun {
    pub model: ScoringModel,
    /// Mean squared error over each epoch's mini-batches.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent on the mean of `(ŷ − s)²`.
///
/// Batches are drawn from a fresh shuffle every epoch using
/// `Rng::new(cfg.seed)`. Per-sample gradients run in parallel and are summed
/// in sample order, so results do not depend on the thread count.
pub fn finetune_scoring(model: &ScoringModel, dataset: &EmbeddingDataset, cfg: &ScoreFitConfig) -> Result<ScoreFitRun> {
    cfg.validate()?;
    model.validate()?;
    if model.basis.is_empty() {
        return Err(Error::Param("model has no basis vectors".into()));
    }
    if dataset.dim() != model.input_dim() {
        return Err(Error::dim(model.input_dim(), dataset.dim()));
    }
    let mut model = model.clone();
    if cfg.epochs == 0 || dataset.is_empty() {
        return Ok(ScoreFitRun {
            model,
            epoch_losses: vec![],
        });
    }

    let records = dataset.records();
    let adapted = records
        .par_iter()
        .map(|r| model.adapt(r.image_emb.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let train_pca = cfg.train_targets.contains(&ScoreTarget::Pca);
    let (k, d, m) = (model.k(), model.input_dim(), model.basis_dim());
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sq_err = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let per_sample = chunk
                .par_iter()
                .map(|&i| {
                    gradients_from_adapted(&model, &adapted[i], records[i].score, train_pca)
                        .map_err(|e| e.for_record(&records[i].id))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = ScoreGradients::zeros(k, if train_pca { d } else { 0 }, m);
            for (g, &i) in per_sample.iter().zip(chunk) {
                let r = g.prediction - records[i].score;
                sq_err += r * r;
                // d(mean (ŷ−s)²) = (2/B) Σ d(½(ŷ−s)²)
                total.add_scaled(g, 2.0 / chunk.len() as f64);
            }
            apply_step(&mut model, &total, cfg);
        }
        model.validate()?;
        let mse = sq_err / records.len() as f64;
        info!("finetune epoch {}/{}: mse {:.6}", epoch + 1, cfg.epochs, mse);
        epoch_losses.push(mse);
    }
    if cfg.train_targets.contains(&ScoreTarget::Scale) {
        model.scale_trained = true;
    }
    Ok(ScoreFitRun { model, epoch_losses })
}

fn apply_step(model: &mut ScoringModel, g: &ScoreGradients, cfg: &ScoreFitConfig) {
    let lr = cfg.lr;
    for target in &cfg.train_targets {
        match target {
            ScoreTarget::Centroids => {
                for (c, gc) in model.basis.centroids.iter_mut().zip(&g.centroids) {
                    for (v, gv) in c.as_mut_slice().iter_mut().zip(gc) {
                        *v -= lr * gv;
                    }
                }
            }
            ScoreTarget::Scores => {
                for (f, gf) in model.basis.scores.iter_mut().zip(&g.scores) {
                    *f -= lr * gf;
                }
            }
            ScoreTarget::Pca => {
                for (u, gu) in model.pca.projection.as_mut_slice().iter_mut().zip(&g.projection) {
                    *u -= lr * gu;
                }
            }
            ScoreTarget::Scale => model.softmax_scale -= lr * g.scale,
        }
    }
}
