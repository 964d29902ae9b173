use log::info;

use super::{contrastive_loss, AlignmentAdapter};
use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::numcore::{cosine_slices, DenseVector, Rng};

/// Temperature is kept inside `[MIN_TEMPERATURE, MAX_TRAINED_TEMPERATURE]`
/// during training (CLIP clamps its logit scale at 100 the same way).
const MIN_TEMPERATURE: f64 = 0.01;
const MAX_TRAINED_TEMPERATURE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub temperature_init: f64,
    pub weight_decay: f64,
}

impl Default for AlignTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            epochs: 10,
            batch_size: 256,
            seed: 0,
            temperature_init: 0.07,
            weight_decay: 0.0,
        }
    }
}

impl AlignTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Param(format!("alignment lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Param(format!(
                "alignment batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Param("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentRun {
    pub adapter: AlignmentAdapter,
    /// Mean contrastive loss of each epoch, weighted by batch size.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent on the symmetric contrastive loss.
///
/// Every epoch reshuffles the records and draws one text embedding per
/// image from the description seeds; both draws come from `Rng(cfg.seed)`.
/// A trailing batch with a single record is dropped.
pub fn train_alignment(dataset: &EmbeddingDataset, cfg: &AlignTrainConfig) -> Result<AlignmentRun> {
    cfg.validate()?;
    let missing: Vec<String> = dataset
        .records()
        .iter()
        .filter(|r| r.text_embs.is_empty())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(
            "alignment needs at least one text embedding per record",
            missing,
        ));
    }
    if dataset.len() < 2 {
        return Err(Error::Param("alignment needs at least 2 records".into()));
    }

    let d = dataset.dim();
    let mut adapter = AlignmentAdapter::identity(d, cfg.temperature_init)?;
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let (lt_min, lt_max) = (MIN_TEMPERATURE.ln(), MAX_TRAINED_TEMPERATURE.ln());

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let picks: Vec<usize> = order
            .iter()
            .map(|&i| rng.below(dataset.records()[i].text_embs.len()))
            .collect();
        let mut total = 0.0;
        let mut seen = 0usize;
        for (chunk, pick) in order.chunks(cfg.batch_size).zip(picks.chunks(cfg.batch_size)) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<(&DenseVector, &DenseVector)> = chunk
                .iter()
                .zip(pick)
                .map(|(&i, &k)| {
                    let r = &dataset.records()[i];
                    (&r.image_emb, &r.text_embs[k])
                })
                .collect();
            let out = contrastive_loss(&adapter, &batch)?;
            total += out.loss * chunk.len() as f64;
            seen += chunk.len();

            let g = &out.gradients;
            for (w, gw) in adapter.weight.as_mut_slice().iter_mut().zip(&g.weight) {
                *w -= cfg.lr * (gw + cfg.weight_decay * *w);
            }
            for (b, gb) in adapter.bias.as_mut_slice().iter_mut().zip(&g.bias) {
                *b -= cfg.lr * gb;
            }
            adapter.log_temperature =
                (adapter.log_temperature - cfg.lr * g.log_temperature).clamp(lt_min, lt_max);
        }
        adapter.validate()?;
        let mean = if seen > 0 { total / seen as f64 } else { f64::NAN };
        info!(
            "align epoch {}/{}: loss {:.6}, temperature {:.4}",
            epoch + 1,
            cfg.epochs,
            mean,
            adapter.temperature()
        );
        epoch_losses.push(mean);
    }
    Ok(AlignmentRun {
        adapter,
        epoch_losses,
    })
}

/// Mean contrastive loss over consecutive, unshuffled batches, pairing each
/// image with its first text.
pub fn dataset_loss(
    adapter: &AlignmentAdapter,
    dataset: &EmbeddingDataset,
    batch_size: usize,
) -> Result<f64> {
    let records = dataset.records();
    let mut total = 0.0;
    let mut seen = 0usize;
    for chunk in records.chunks(batch_size.max(2)) {
        if chunk.len() < 2 {
            continue;
        }
        let batch = chunk
            .iter()
            .map(|r| {
                r.text_embs
                    .first()
                    .map(|t| (&r.image_emb, t))
                    .ok_or_else(|| Error::validation("record without text", vec![r.id.clone()]))
            })
            .collect::<Result<Vec<_>>>()?;
        total += contrastive_loss(adapter, &batch)?.loss * chunk.len() as f64;
        seen += chunk.len();
    }
    if seen == 0 {
        return Err(Error::Param("dataset_loss needs at least 2 records".into()));
    }
    Ok(total / seen as f64)
}

/// Fraction of images whose most similar text, among the texts of their own
/// batch, is their paired (first) text. Batches are consecutive records in
/// a seeded shuffle.
pub fn retrieval_accuracy(
    adapter: &AlignmentAdapter,
    dataset: &EmbeddingDataset,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    if batch_size < 2 {
        return Err(Error::Param("retrieval batch_size must be >= 2".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut hits = 0usize;
    let mut total = 0usize;
    for chunk in order.chunks(batch_size) {
        let ys = chunk
            .iter()
            .map(|&i| adapter.apply_slice(dataset.records()[i].image_emb.as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let ts: Vec<&[f64]> = chunk
            .iter()
            .map(|&i| {
                dataset.records()[i]
                    .text_embs
                    .first()
                    .map(|t| t.as_slice())
                    .ok_or_else(|| Error::validation("record without text", vec![dataset.records()[i].id.clone()]))
            })
            .collect::<Result<_>>()?;
        for (p, y) in ys.iter().enumerate() {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (q, t) in ts.iter().enumerate() {
                let c = cosine_slices(y, t)?;
                if c > best.1 {
                    best = (q, c);
                }
            }
            hits += usize::from(best.0 == p);
            total += 1;
        }
    }
    Ok(hits as f64 / total.max(1) as f64)
}
