//! `RQM1` scoring-model container, little-endian:
//!
//! ```text
//! magic "RQM1" | version u32 | D u32 | M u32 | K u32 | flags u32
//! pca mean f32[D] | projection f32[D·M] (row-major) | eigenvalues f32[M]
//! centroids f32[K·M] | scores f32[K] | bucket_of u32[K]
//! adapter weight f32[D·D] | bias f32[D] | log_temperature f32   (flag bit 0)
//! softmax_scale f32
//! ```
//!
//! Flag bit 0 marks an adapter, bit 1 a fitted softmax scale.

use std::fs;
use std::path::Path;

use super::ScoringModel;
use crate::alignment::io::{read_adapter_body, write_adapter_body};
use crate::compression::{BasisSet, PcaModel};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::numcore::{DenseMatrix, DenseVector};

pub const MODEL_MAGIC: &[u8; 4] = b"RQM1";
const MODEL_VERSION: u32 = 1;
const FLAG_ADAPTER: u32 = 1;
const FLAG_SCALE_TRAINED: u32 = 2;

fn body_len(d: usize, m: usize, k: usize, adapter: bool) -> usize {
    let floats = d + d * m + m + k * m + k + 1 + if adapter { d * d + d + 1 } else { 0 };
    4 * (floats + k)
}

pub fn encode_model(model: &ScoringModel) -> Vec<u8> {
    let (d, m, k) = (model.input_dim(), model.basis_dim(), model.k());
    let mut w = ByteWriter::with_capacity(24 + body_len(d, m, k, model.adapter.is_some()));
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u32(d as u32);
    w.u32(m as u32);
    w.u32(k as u32);
    let mut flags = 0;
    if model.adapter.is_some() {
        flags |= FLAG_ADAPTER;
    }
    if model.scale_trained {
        flags |= FLAG_SCALE_TRAINED;
    }
    w.u32(flags);
    w.f32s(model.pca.mean.as_slice());
    w.f32s(model.pca.projection.as_slice());
    w.f32s(model.pca.eigenvalues.as_slice());
    for c in &model.basis.centroids {
        w.f32s(c.as_slice());
    }
    w.f32s(&model.basis.scores);
    for &b in &model.basis.bucket_of {
        w.u32(b as u32);
    }
    if let Some(a) = &model.adapter {
        write_adapter_body(&mut w, a);
    }
    w.f32(model.softmax_scale);
    w.into_inner()
}

pub fn decode_model(bytes: &[u8]) -> Result<ScoringModel> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::Format("bad magic, expected \"RQM1\"".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported RQM1 version {version}")));
    }
    let d = r.u32()? as usize;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let flags = r.u32()?;
    if flags & !(FLAG_ADAPTER | FLAG_SCALE_TRAINED) != 0 {
        return Err(Error::Format(format!("unknown RQM1 flags {flags:#x}")));
    }
    if d == 0 || m == 0 {
        return Err(Error::Format(format!("RQM1 declares D={d}, M={m}")));
    }
    let has_adapter = flags & FLAG_ADAPTER != 0;
    let expected = body_len(d, m, k, has_adapter);
    if r.remaining() != expected {
        return Err(Error::Format(format!(
            "RQM1 body is {} bytes, expected {expected}",
            r.remaining()
        )));
    }

    let pca = PcaModel {
        mean: DenseVector::new(r.f32s(d)?)?,
        projection: DenseMatrix::new(d, m, r.f32s(d * m)?)?,
        eigenvalues: DenseVector::new(r.f32s(m)?)?,
    };
    let centroids = (0..k)
        .map(|_| r.f32s(m).and_then(DenseVector::new))
        .collect::<Result<Vec<_>>>()?;
    let scores = r.f32s(k)?;
    let bucket_of = (0..k).map(|_| r.u32().map(|b| b as usize)).collect::<Result<Vec<_>>>()?;
    let adapter = if has_adapter {
        Some(read_adapter_body(&mut r, d)?)
    } else {
        None
    };
    let softmax_scale = f64::from(r.f32()?);
    let model = ScoringModel {
        pca,
        basis: BasisSet {
            centroids,
            scores,
            bucket_of,
        },
        adapter,
        softmax_scale,
        scale_trained: flags & FLAG_SCALE_TRAINED != 0,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &ScoringModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ScoringModel> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use crate::scoring::tests::{random_model, toy_model};

    #[test]
    fn layout() {
        let model = toy_model(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![5.0, 1.0]);
        let b = encode_model(&model);
        assert_eq!(&b[..4], b"RQM1");
        assert_eq!(&b[4..24], &[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(b.len(), 24 + 4 * (2 + 4 + 2 + 4 + 2 + 2 + 1));
        // projection starts after the mean; identity row-major
        assert_eq!(&b[32..36], &1.0f32.to_le_bytes());
        assert_eq!(&b[b.len() - 4..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(12);
        let mut model = random_model(&mut rng, 5, 3, 4);
        model.scale_trained = true;
        model.quantize_f32();
        let bytes = encode_model(&model);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode_model(&back), bytes);
        let x = DenseVector::new(vec![0.1, 0.2, -0.3, 0.4, 2.0]).unwrap();
        assert_eq!(model.predict(&x).unwrap(), back.predict(&x).unwrap());

        model.adapter = None;
        model.scale_trained = false;
        let back = decode_model(&encode_model(&model)).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn malformed() {
        let model = toy_model(vec![vec![1.0, 0.0]], vec![3.0]);
        let b = encode_model(&model);
        assert!(matches!(decode_model(&b[..b.len() - 1]), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::Format(_))));
        let mut bad = b.clone();
        bad[20] = 8;
        assert!(matches!(decode_model(&bad), Err(Error::Format(_))));
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(decode_model(&extra), Err(Error::Format(_))));
    }

    #[test]
    fn projection_only_model() {
        let basis = BasisSet {
            centroids: vec![],
            scores: vec![],
            bucket_of: vec![],
        };
        let model = ScoringModel::new(PcaModel::identity(3), basis, None).unwrap();
        let back = decode_model(&encode_model(&model)).unwrap();
        assert_eq!(back.k(), 0);
        assert_eq!(back, model);
    }
}
