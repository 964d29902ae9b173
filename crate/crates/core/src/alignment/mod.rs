//! Contrastive alignment of image embeddings to frozen text embeddings.
//!
//! The image side is an affine adapter `y = W·x + b` with a learnable
//! temperature; the text embeddings are never modified.

pub(crate) mod io;
mod loss;
mod train;

pub use io::{decode_adapter, encode_adapter, load_adapter, save_adapter, ADAPTER_MAGIC};
pub use loss::{contrastive_loss, AdapterGradients, ContrastiveLoss};
pub use train::{dataset_loss, retrieval_accuracy, train_alignment, AlignTrainConfig, AlignmentRun};

use crate::error::{Error, Result};
use crate::numcore::{check_dim, DenseMatrix, DenseVector};

/// Largest admissible temperature (exclusive).
pub const MAX_TEMPERATURE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentAdapter {
    /// `D × D`, row-major.
    pub weight: DenseMatrix,
    pub bias: DenseVector,
    pub log_temperature: f64,
}

impl AlignmentAdapter {
    /// Identity map with zero bias, i.e. the unadapted embedding space.
    pub fn identity(dim: usize, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature < MAX_TEMPERATURE) {
            return Err(Error::Param(format!(
                "temperature must lie in (0, {MAX_TEMPERATURE}), got {temperature}"
            )));
        }
        Ok(Self {
            weight: DenseMatrix::identity(dim),
            bias: DenseVector::zeros(dim),
            log_temperature: temperature.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.bias.dim()
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// `W·x + b`, unnormalized.
    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        self.apply_slice(x.as_slice()).and_then(DenseVector::new)
    }

    pub(crate) fn apply_slice(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut y = self.weight.matvec(x)?;
        for (yi, bi) in y.iter_mut().zip(self.bias.as_slice()) {
            *yi += bi;
        }
        Ok(y)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.weight.rows() != d || self.weight.cols() != d {
            return Err(Error::dim(d * d, self.weight.rows() * self.weight.cols()));
        }
        if !self.weight.is_finite() || !self.bias.is_finite() || !self.log_temperature.is_finite() {
            return Err(Error::Numeric("adapter has non-finite parameters".into()));
        }
        let t = self.temperature();
        if !(t > 0.0 && t < MAX_TEMPERATURE) {
            return Err(Error::Numeric(format!("adapter temperature {t} out of range")));
        }
        Ok(())
    }

    pub fn quantize_f32(&mut self) {
        self.weight.quantize_f32();
        self.bias.quantize_f32();
        self.log_temperature = f64::from(self.log_temperature as f32);
    }
}

pub fn apply_adapter(adapter: &AlignmentAdapter, x: &DenseVector) -> Result<DenseVector> {
    adapter.apply(x)
}
