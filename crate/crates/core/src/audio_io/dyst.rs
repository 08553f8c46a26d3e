//! DYST tensor files.
//!
//! ```text
//! "DYST" | u32 LE version = 1 | u8 rank | rank × u32 LE dims | f32 LE payload, row-major
//! ```

use std::path::Path;

use super::{read_file, AudioIoError};
use crate::nn::Tensor;

const MAGIC: &[u8; 4] = b"DYST";
const VERSION: u32 = 1;

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>, AudioIoError> {
    let rank = u8::try_from(t.shape().len())
        .map_err(|_| AudioIoError::ShapeOverflow(format!("rank {} exceeds 255", t.shape().len())))?;
    let mut out = Vec::with_capacity(9 + 4 * t.shape().len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(rank);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| AudioIoError::ShapeOverflow(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, AudioIoError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(AudioIoError::BadMagic { expected: "DYST" });
    }
    if bytes.len() < 9 {
        return Err(AudioIoError::ShapeOverflow("header truncated".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(AudioIoError::UnsupportedVersion(version));
    }
    let rank = bytes[8] as usize;
    let dims_end = 9 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(AudioIoError::ShapeOverflow("dimension list truncated".into()));
    }
    let shape: Vec<usize> = bytes[9..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let payload = &bytes[dims_end..];
    let expected = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4));
    if rank == 0 || expected != Some(payload.len()) {
        return Err(AudioIoError::ShapeOverflow(format!(
            "shape {shape:?} vs {} payload bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(shape, data).map_err(|e| AudioIoError::ShapeOverflow(e.to_string()))
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<(), AudioIoError> {
    std::fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor, AudioIoError> {
    decode_tensor(&read_file(path.as_ref())?)
}
