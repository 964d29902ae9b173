//! Reasoning-aligned lightweight image quality scoring.
//!
//! The engine works on precomputed embeddings. An affine adapter is aligned
//! to frozen quality-description text embeddings with a contrastive loss,
//! the adapted space is compressed with PCA and bucketed k-means into `K`
//! scored basis vectors, and a quality score is predicted as the
//! softmax-of-cosine weighted sum of the basis scores.

pub mod alignment;
pub mod compression;
pub mod dataset;
pub mod error;
mod io;
pub mod metrics;
pub mod numcore;
pub mod scoring;

pub use error::{Error, ErrorKind, Result};
