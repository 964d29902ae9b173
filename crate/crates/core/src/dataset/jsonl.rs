//! JSON-lines fixtures: one `{"id","score","image_emb","text_embs"}` object
//! per line. Numbers are read as f64 and narrowed to f32 precision so that
//! both formats hold the same values.

use serde::{Deserialize, Serialize};

use super::{EmbeddingDataset, SampleRecord};
use crate::error::{Error, Result};
use crate::numcore::DenseVector;

#[derive(Serialize, Deserialize)]
struct Line {
    id: String,
    score: f64,
    image_emb: Vec<f64>,
    #[serde(default)]
    text_embs: Vec<Vec<f64>>,
}

fn narrow(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| f64::from(x as f32)).collect()
}

pub(super) fn decode_jsonl(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("JSONL is not UTF-8: {e}")))?;
    let mut records = Vec::new();
    let mut non_finite = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        let image = narrow(l.image_emb);
        let texts: Vec<Vec<f64>> = l.text_embs.into_iter().map(narrow).collect();
        if image.is_empty() {
            return Err(Error::Format(format!("line {}: empty image_emb", lineno + 1)));
        }
        if image.iter().chain(texts.iter().flatten()).any(|v| !v.is_finite()) {
            non_finite.push(l.id);
            continue;
        }
        records.push(SampleRecord {
            id: l.id,
            image_emb: DenseVector::new(image)?,
            text_embs: texts
                .into_iter()
                .map(|t| {
                    if t.is_empty() {
                        Err(Error::Format("empty text embedding".into()))
                    } else {
                        DenseVector::new(t)
                    }
                })
                .collect::<Result<_>>()?,
            score: f64::from(l.score as f32),
        });
    }
    if !non_finite.is_empty() {
        return Err(Error::validation("non-finite embedding entry", non_finite));
    }
    let dim = records
        .first()
        .map(|r| r.image_emb.dim())
        .ok_or_else(|| Error::Format("JSONL dataset has no records, dimension unknown".into()))?;
    EmbeddingDataset::new(dim, records)
}

pub(super) fn encode_jsonl(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut out = Vec::new();
    for r in &ds.records {
        let line = Line {
            id: r.id.clone(),
            score: r.score,
            image_emb: r.image_emb.as_slice().to_vec(),
            text_embs: r.text_embs.iter().map(|t| t.as_slice().to_vec()).collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::Format(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}
