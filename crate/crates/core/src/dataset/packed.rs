//! `RQE1` packed dataset container.
//!
//! ```text
//! header (24 bytes):
//!   magic "RQE1" | version u32 | D u32 | record count u64 | texts per record u32
//! per record:
//!   id length u16 | UTF-8 id | score f32 | image f32[D] | texts f32[D] × texts per record
//! ```
//! All integers and floats little-endian.

use super::{EmbeddingDataset, SampleRecord};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::numcore::DenseVector;

pub const PACKED_MAGIC: &[u8; 4] = b"RQE1";
pub const PACKED_VERSION: u32 = 1;
pub const PACKED_HEADER_LEN: usize = 24;

pub fn encode_packed(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let per_record = ds.records.first().map_or(0, |r| r.text_embs.len());
    let ragged: Vec<String> = ds
        .records
        .iter()
        .filter(|r| r.text_embs.len() != per_record)
        .map(|r| r.id.clone())
        .collect();
    if !ragged.is_empty() {
        return Err(Error::validation(
            format!("packed format needs {per_record} text embeddings on every record"),
            ragged,
        ));
    }
    let long: Vec<String> = ds
        .records
        .iter()
        .filter(|r| r.id.len() > u16::MAX as usize)
        .map(|r| r.id.clone())
        .collect();
    if !long.is_empty() {
        return Err(Error::validation("record id longer than 65535 bytes", long));
    }

    let dim = ds.dim;
    let per_rec_bytes = 2 + 4 + 4 * dim * (1 + per_record);
    let mut w = ByteWriter::with_capacity(
        PACKED_HEADER_LEN + ds.records.iter().map(|r| r.id.len() + per_rec_bytes).sum::<usize>(),
    );
    w.bytes(PACKED_MAGIC);
    w.u32(PACKED_VERSION);
    w.u32(u32::try_from(dim).map_err(|_| Error::Param("dimension exceeds u32".into()))?);
    w.u64(ds.records.len() as u64);
    w.u32(per_record as u32);
    for r in &ds.records {
        w.u16(r.id.len() as u16);
        w.bytes(r.id.as_bytes());
        w.f32(r.score);
        w.f32s(r.image_emb.as_slice());
        for t in &r.text_embs {
            w.f32s(t.as_slice());
        }
    }
    Ok(w.into_inner())
}

pub fn decode_packed(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4)?;
    if magic != PACKED_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"RQE1\"",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32()?;
    if version != PACKED_VERSION {
        return Err(Error::Format(format!("unsupported RQE1 version {version}")));
    }
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(Error::Format("RQE1 header declares dimension 0".into()));
    }
    let count = r.u64()?;
    let per_record = r.u32()? as usize;

    // Every record needs at least this many bytes; reject absurd counts early.
    let min_rec = 2 + 4 + 4 * dim * (1 + per_record);
    if count.saturating_mul(min_rec as u64) > r.remaining() as u64 {
        return Err(Error::Format(format!(
            "header declares {count} records but only {} bytes follow",
            r.remaining()
        )));
    }

    let mut records = Vec::with_capacity(count as usize);
    let mut non_finite = Vec::new();
    for _ in 0..count {
        let id_len = r.u16()? as usize;
        let id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|e| Error::Format(format!("record id is not UTF-8: {e}")))?
            .to_string();
        let score = f64::from(r.f32()?);
        let image = r.f32s(dim)?;
        let mut texts = Vec::with_capacity(per_record);
        for _ in 0..per_record {
            texts.push(r.f32s(dim)?);
        }
        if image.iter().chain(texts.iter().flatten()).any(|v| !v.is_finite()) {
            non_finite.push(id);
            continue;
        }
        records.push(SampleRecord {
            id,
            image_emb: DenseVector::new(image)?,
            text_embs: texts.into_iter().map(DenseVector::new).collect::<Result<_>>()?,
            score,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after last record",
            r.remaining()
        )));
    }
    if !non_finite.is_empty() {
        return Err(Error::validation("non-finite embedding entry", non_finite));
    }
    EmbeddingDataset::new(dim, records)
}
