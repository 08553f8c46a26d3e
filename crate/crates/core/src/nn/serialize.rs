//! DYSW weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DYSW" | u32 version = 1 | u32 entry count
//! per entry: u16 name length | UTF-8 name | u8 rank | rank × u32 dims | f32 payload
//! ```

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use super::weights::WeightStore;
use super::NnError;

const MAGIC: &[u8; 4] = b"DYSW";
const VERSION: u32 = 1;

pub fn encode_weights(ws: &WeightStore<f32>) -> Result<Vec<u8>, NnError> {
    let mut out = Vec::with_capacity(12 + ws.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ws.len() as u32).to_le_bytes());
    for (name, t) in ws.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| NnError::ShapeOverflow(format!("name {name:?} too long")))?;
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| NnError::ShapeOverflow(format!("{name} has rank > 255")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| NnError::ShapeOverflow(format!("{name} dim {d}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::ShapeOverflow(format!("file ends inside {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore<f32>, NnError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(NnError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(NnError::UnsupportedVersion(version));
    }
    let count = r.u32("header")?;
    let mut ws = WeightStore::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2, "entry header")?.try_into().expect("2 bytes"));
        let name = std::str::from_utf8(r.take(name_len as usize, "entry name")?)
            .map_err(|_| NnError::BadName)?
            .to_string();
        let rank = r.take(1, "entry header")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("entry dims")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| NnError::ShapeOverflow(format!("{name} dims {shape:?} overflow")))?;
        let nbytes = n
            .checked_mul(4)
            .ok_or_else(|| NnError::ShapeOverflow(format!("{name} dims {shape:?} overflow")))?;
        let payload = r.take(nbytes, &format!("payload of {name}"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape.clone(), data)
            .map_err(|_| NnError::ShapeOverflow(format!("{name} has invalid shape {shape:?}")))?;
        ws.insert(name, t)?;
    }
    if r.pos != bytes.len() {
        return Err(NnError::ShapeOverflow(format!(
            "{} trailing bytes after last entry",
            bytes.len() - r.pos
        )));
    }
    Ok(ws)
}

pub fn save_weights(ws: &WeightStore<f32>, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path, encode_weights(ws)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore<f32>, NnError> {
    decode_weights(&fs::read(path)?)
}
