//! Image–text–score embedding records and their on-disk containers.
//!
//! Two formats are supported: the packed little-endian `RQE1` container
//! (bit-exact interchange with the embedding extractor) and JSON lines for
//! hand-written fixtures.

mod jsonl;
mod packed;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

pub use packed::{decode_packed, encode_packed, PACKED_HEADER_LEN, PACKED_MAGIC, PACKED_VERSION};
pub use synth::{gen_synthetic, SyntheticDirections, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numcore::DenseVector;

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 5.0;

/// One image: its embedding, one text embedding per description seed, and
/// its mean opinion score.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub image_emb: DenseVector,
    pub text_embs: Vec<DenseVector>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct EmbeddingDataset {
    dim: usize,
    records: Vec<SampleRecord>,
    pub meta: BTreeMap<String, String>,
}

impl PartialEq for EmbeddingDataset {
    /// Metadata is not persisted by every format, so equality covers
    /// dimension and records only.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.records == other.records
    }
}

impl EmbeddingDataset {
    /// Builds a dataset, enforcing every record invariant.
    pub fn new(dim: usize, records: Vec<SampleRecord>) -> Result<Self> {
        let d = Self {
            dim,
            records,
            meta: BTreeMap::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Splits off the records from `at` onwards into a second dataset.
    pub fn split_at(mut self, at: usize) -> (Self, Self) {
        let tail = self.records.split_off(at.min(self.records.len()));
        let second = Self {
            dim: self.dim,
            records: tail,
            meta: self.meta.clone(),
        };
        (self, second)
    }

    /// Same records, each keeping only its first text embedding.
    pub fn first_text_only(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| SampleRecord {
                text_embs: r.text_embs.iter().take(1).cloned().collect(),
                ..r.clone()
            })
            .collect();
        Self {
            dim: self.dim,
            records,
            meta: self.meta.clone(),
        }
    }

    /// Checks every invariant; the error lists the offending ids.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Param("dataset dimension must be positive".into()));
        }
        let mut seen = HashSet::new();
        let mut dup = Vec::new();
        let mut bad_score = Vec::new();
        let mut bad_dim = Vec::new();
        let mut non_finite = Vec::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                dup.push(r.id.clone());
            }
            if !(MIN_SCORE..=MAX_SCORE).contains(&r.score) {
                bad_score.push(r.id.clone());
            }
            if r.image_emb.dim() != self.dim || r.text_embs.iter().any(|t| t.dim() != self.dim) {
                bad_dim.push(r.id.clone());
            }
            if !r.image_emb.is_finite() || r.text_embs.iter().any(|t| !t.is_finite()) {
                non_finite.push(r.id.clone());
            }
        }
        if !dup.is_empty() {
            return Err(Error::validation("duplicate record ids", dup));
        }
        if !bad_score.is_empty() {
            return Err(Error::validation(
                format!("score outside [{MIN_SCORE}, {MAX_SCORE}]"),
                bad_score,
            ));
        }
        if !bad_dim.is_empty() {
            return Err(Error::validation(
                format!("embedding dimension differs from dataset dimension {}", self.dim),
                bad_dim,
            ));
        }
        if !non_finite.is_empty() {
            return Err(Error::validation("non-finite embedding entry", non_finite));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Packed,
}

impl DatasetFormat {
    /// `.jsonl`/`.json` → JSONL, anything else → packed.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DatasetFormat::Jsonl,
            _ => DatasetFormat::Packed,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "packed" | "rqe1" => Ok(DatasetFormat::Packed),
            other => Err(Error::Param(format!("unknown dataset format '{other}'"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let ds = match format {
        DatasetFormat::Packed => decode_packed(&bytes)?,
        DatasetFormat::Jsonl => jsonl::decode_jsonl(&bytes)?,
    };
    Ok(ds.with_meta("source", path.display().to_string()))
}

pub fn save_dataset(
    dataset: &EmbeddingDataset,
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<()> {
    let bytes = match format {
        DatasetFormat::Packed => encode_packed(dataset)?,
        DatasetFormat::Jsonl => jsonl::encode_jsonl(dataset)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}
