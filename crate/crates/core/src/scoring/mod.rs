//! Score prediction as a softmax-of-cosine weighted sum of basis scores,
//! and end-to-end fine-tuning of the basis.

mod finetune;
mod gradients;
mod io;

pub use finetune::{finetune_scoring, ScoreFitConfig, ScoreFitRun, ScoreTarget};
pub use gradients::{score_gradients, ScoreGradients};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC};

use crate::alignment::AlignmentAdapter;
use crate::compression::{BasisSet, PcaModel};
use crate::error::{Error, Result};
use crate::numcore::{check_dim, cosine_slices, softmax_slice, DenseVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub pca: PcaModel,
    pub basis: BasisSet,
    pub adapter: Option<AlignmentAdapter>,
    /// Multiplier on the cosines before the softmax; 1 is the plain form.
    pub softmax_scale: f64,
    /// Whether `softmax_scale` was fitted rather than left at its default.
    pub scale_trained: bool,
}

impl ScoringModel {
    pub fn new(pca: PcaModel, basis: BasisSet, adapter: Option<AlignmentAdapter>) -> Result<Self> {
        let model = Self {
            pca,
            basis,
            adapter,
            softmax_scale: 1.0,
            scale_trained: false,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.pca.input_dim()
    }

    pub fn basis_dim(&self) -> usize {
        self.pca.output_dim()
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    /// Structural checks; a model with an empty basis is valid (a stored
    /// projection only) but cannot predict.
    pub fn validate(&self) -> Result<()> {
        self.pca.validate()?;
        self.basis.validate()?;
        if let Some(d) = self.basis.dim() {
            check_dim(self.basis_dim(), d)?;
        }
        if let Some(a) = &self.adapter {
            a.validate()?;
            check_dim(self.input_dim(), a.dim())?;
        }
        if !self.softmax_scale.is_finite() {
            return Err(Error::Numeric("softmax scale is not finite".into()));
        }
        Ok(())
    }

    /// Adapter output for `x` (or `x` itself without an adapter).
    pub(crate) fn adapt(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        match &self.adapter {
            Some(a) => a.apply_slice(x),
            None => Ok(x.to_vec()),
        }
    }

    /// Compressed representation `z` of an image embedding.
    pub fn embed(&self, x: &DenseVector) -> Result<DenseVector> {
        DenseVector::new(self.pca.project_slice(&self.adapt(x.as_slice())?)?)
    }

    /// Score and weights from an already compressed `z`.
    pub(crate) fn predict_projected(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.basis.is_empty() {
            return Err(Error::Param("model has no basis vectors".into()));
        }
        if z.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateInput("projected embedding has zero norm".into()));
        }
        let logits = self
            .basis
            .centroids
            .iter()
            .map(|mu| cosine_slices(z, mu.as_slice()).map(|c| self.softmax_scale * c))
            .collect::<Result<Vec<_>>>()?;
        let w = softmax_slice(&logits)?;
        let score = w.iter().zip(&self.basis.scores).map(|(wi, fi)| wi * fi).sum();
        Ok((score, w))
    }

    /// Predicted score and the softmax weight of every basis vector.
    pub fn predict(&self, x: &DenseVector) -> Result<(f64, DenseVector)> {
        let z = self.pca.project_slice(&self.adapt(x.as_slice())?)?;
        let (score, w) = self.predict_projected(&z)?;
        Ok((score, DenseVector::new(w)?))
    }

    pub fn quantize_f32(&mut self) {
        self.pca.quantize_f32();
        self.basis.quantize_f32();
        if let Some(a) = &mut self.adapter {
            a.quantize_f32();
        }
        self.softmax_scale = f64::from(self.softmax_scale as f32);
    }
}

pub fn predict(model: &ScoringModel, x: &DenseVector) -> Result<(f64, DenseVector)> {
    model.predict(x)
}
