//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian `u64`:
//!
//! ```text
//! "MPCRN1\0"  header_len  header_bytes  record_count
//! repeated: name_len  name_bytes  rank  dims[rank]  values[f32 LE; prod(dims)]
//! ```
//!
//! The header carries the model configuration as `key=value` text.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::{cast, ModelParams, Real};

pub const MAGIC: &[u8; 7] = b"MPCRN1\0";

/// Upper bound on any length field, to reject garbage before allocating.
const MAX_LEN: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::InvalidInput(format!("malformed checkpoint: {}", msg.into()))
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| malformed(format!("truncated while reading {what}")))?;
    let v = u64::from_le_bytes(b);
    if v > MAX_LEN {
        return Err(malformed(format!("{what} {v} out of range")));
    }
    Ok(v)
}

pub fn write_checkpoint<W: Write, T: Real>(w: &mut W, header: &str, params: &ModelParams<T>) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u64(w, header.len() as u64)?;
    w.write_all(header.as_bytes())?;
    write_u64(w, params.len() as u64)?;
    for e in params.entries() {
        write_u64(w, e.name.len() as u64)?;
        w.write_all(e.name.as_bytes())?;
        write_u64(w, e.shape.len() as u64)?;
        for &d in &e.shape {
            write_u64(w, d as u64)?;
        }
        let mut buf = Vec::with_capacity(e.value.len() * 4);
        for v in &e.value {
            buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(String, Vec<Record>)> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|_| malformed("missing magic"))?;
    if &magic != MAGIC {
        return Err(malformed("bad magic"));
    }
    let hlen = read_u64(r, "header length")? as usize;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes)
        .map_err(|_| malformed("truncated header"))?;
    let header = String::from_utf8(hbytes).map_err(|_| malformed("header is not UTF-8"))?;
    let count = read_u64(r, "record count")? as usize;
    let mut records = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let nlen = read_u64(r, "name length")? as usize;
        let mut nbytes = vec![0u8; nlen];
        r.read_exact(&mut nbytes)
            .map_err(|_| malformed("truncated name"))?;
        let name = String::from_utf8(nbytes).map_err(|_| malformed("name is not UTF-8"))?;
        let rank = read_u64(r, "rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(read_u64(r, "dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n as u64 <= MAX_LEN)
            .ok_or_else(|| malformed(format!("shape {shape:?} too large")))?;
        let mut raw = vec![0u8; numel * 4];
        r.read_exact(&mut raw)
            .map_err(|_| malformed(format!("truncated values for {name}")))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(Record {
            name,
            shape,
            values,
        });
    }
    Ok((header, records))
}

/// Copies record values into `params`; every entry must be present with a matching shape.
pub fn apply_records<T: Real>(params: &mut ModelParams<T>, records: &[Record]) -> Result<()> {
    if records.len() != params.len() {
        return Err(malformed(format!(
            "{} records for a model with {} entries",
            records.len(),
            params.len()
        )));
    }
    for rec in records {
        let id = params
            .find(&rec.name)
            .ok_or_else(|| malformed(format!("unknown entry {}", rec.name)))?;
        if params.entry(id).shape != rec.shape {
            return Err(malformed(format!(
                "entry {} has shape {:?}, model expects {:?}",
                rec.name,
                rec.shape,
                params.entry(id).shape
            )));
        }
        for (dst, &src) in params.value_mut(id).iter_mut().zip(&rec.values) {
            *dst = cast(src as f64);
        }
    }
    Ok(())
}
