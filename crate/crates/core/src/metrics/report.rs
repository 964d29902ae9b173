use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_logistic4, mse, plcc, srcc};
use crate::dataset::{EmbeddingDataset, MAX_SCORE, MIN_SCORE};
use crate::error::{Error, Result};
use crate::numcore::DenseVector;
use crate::scoring::ScoringModel;

/// Anything that maps an image embedding to a quality score.
pub trait Predictor {
    fn predict_score(&self, image_emb: &DenseVector) -> Result<f64>;
}

impl Predictor for ScoringModel {
    fn predict_score(&self, image_emb: &DenseVector) -> Result<f64> {
        self.predict(image_emb).map(|(s, _)| s)
    }
}

impl<F> Predictor for F
where
    F: Fn(&DenseVector) -> Result<f64>,
{
    fn predict_score(&self, image_emb: &DenseVector) -> Result<f64> {
        self(image_emb)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOptions {
    /// Remap predictions through a fitted 4-parameter logistic before PLCC.
    pub logistic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    pub n: usize,
    pub plcc: f64,
    pub srcc: f64,
    pub mse: f64,
    pub logistic: bool,
}

impl EvalReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// `PLCC / SRCC` cell with three decimals.
    pub fn cell(&self) -> String {
        format!("{:.3} / {:.3}", self.plcc, self.srcc)
    }
}

/// Aligned plain-text table with one `PLCC / SRCC` cell per row.
pub fn format_table(rows: &[(String, EvalReport)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(4);
    let mut out = format!("{:<label_w$}  {:>6}  {:<15}  {:>8}\n", "case", "n", "PLCC / SRCC", "MSE");
    for (label, r) in rows {
        out.push_str(&format!("{:<label_w$}  {:>6}  {:<15}  {:>8.4}\n", label, r.n, r.cell(), r.mse));
    }
    out
}

pub fn evaluate<P: Predictor + Sync>(model: &P, dataset: &EmbeddingDataset) -> Result<EvalReport> {
    evaluate_with(model, dataset, &EvalOptions::default())
}

/// Predicts every record (clamped to the score range) and correlates with
/// the labels. Prediction errors carry the offending record id.
pub fn evaluate_with<P: Predictor + Sync>(
    model: &P,
    dataset: &EmbeddingDataset,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Param("cannot evaluate an empty dataset".into()));
    }
    let preds = dataset
        .records()
        .par_iter()
        .map(|r| {
            model
                .predict_score(&r.image_emb)
                .map(|s| s.clamp(MIN_SCORE, MAX_SCORE))
                .map_err(|e| e.for_record(&r.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = dataset.scores();
    let srcc = srcc(&preds, &truth)?;
    let plcc = if opts.logistic {
        let fit = fit_logistic4(&preds, &truth)?;
        let mapped: Vec<f64> = preds.iter().map(|&p| fit.eval(p)).collect();
        super::plcc(&mapped, &truth)?
    } else {
        plcc(&preds, &truth)?
    };
    Ok(EvalReport {
        dataset_name: dataset.meta.get("source").cloned().unwrap_or_else(|| "dataset".into()),
        n: preds.len(),
        plcc,
        srcc,
        mse: mse(&preds, &truth)?,
        logistic: opts.logistic,
    })
}
