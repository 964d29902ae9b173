//! `RQA1` adapter container:
//! magic "RQA1" | version u32 | D u32 | weight f32[D·D] (row-major) |
//! bias f32[D] | log_temperature f32, little-endian.

use std::fs;
use std::path::Path;

use super::AlignmentAdapter;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::numcore::{DenseMatrix, DenseVector};

pub const ADAPTER_MAGIC: &[u8; 4] = b"RQA1";
const ADAPTER_VERSION: u32 = 1;

pub fn encode_adapter(a: &AlignmentAdapter) -> Vec<u8> {
    let d = a.dim();
    let mut w = ByteWriter::with_capacity(12 + 4 * (d * d + d + 1));
    w.bytes(ADAPTER_MAGIC);
    w.u32(ADAPTER_VERSION);
    w.u32(d as u32);
    write_adapter_body(&mut w, a);
    w.into_inner()
}

pub(crate) fn write_adapter_body(w: &mut ByteWriter, a: &AlignmentAdapter) {
    w.f32s(a.weight.as_slice());
    w.f32s(a.bias.as_slice());
    w.f32(a.log_temperature);
}

pub(crate) fn read_adapter_body(r: &mut ByteReader<'_>, d: usize) -> Result<AlignmentAdapter> {
    let weight = DenseMatrix::new(d, d, r.f32s(d * d)?)?;
    let bias = DenseVector::new(r.f32s(d)?)?;
    let log_temperature = f64::from(r.f32()?);
    let a = AlignmentAdapter {
        weight,
        bias,
        log_temperature,
    };
    a.validate()?;
    Ok(a)
}

pub fn decode_adapter(bytes: &[u8]) -> Result<AlignmentAdapter> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != ADAPTER_MAGIC {
        return Err(Error::Format("bad magic, expected \"RQA1\"".into()));
    }
    let version = r.u32()?;
    if version != ADAPTER_VERSION {
        return Err(Error::Format(format!("unsupported RQA1 version {version}")));
    }
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(Error::Format("RQA1 declares dimension 0".into()));
    }
    if r.remaining() != 4 * (d * d + d + 1) {
        return Err(Error::Format(format!(
            "RQA1 body is {} bytes, expected {}",
            r.remaining(),
            4 * (d * d + d + 1)
        )));
    }
    read_adapter_body(&mut r, d)
}

pub fn save_adapter(a: &AlignmentAdapter, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_adapter(a))?;
    Ok(())
}

pub fn load_adapter(path: impl AsRef<Path>) -> Result<AlignmentAdapter> {
    decode_adapter(&fs::read(path)?)
}
