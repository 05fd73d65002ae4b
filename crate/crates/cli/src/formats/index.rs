//! Index file: magic `BRIX`, version (u32), `n` (u64), `d` (u32), then `n`
//! ids as u64 in ascending order and the `n × d` matrix of unit rows as f32,
//! row-major.

use std::path::Path;

use biasret_core::index::RetrievalIndex;

use super::{put_f32s, put_u32, read_file, write_file, Reader};
use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"BRIX";
const VERSION: u32 = 1;

pub fn encode_index(index: &RetrievalIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + index.len() * (8 + 4 * index.dim()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    put_u32(&mut out, index.dim());
    for id in index.ids() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    put_f32s(&mut out, index.matrix().iter().copied());
    out
}

pub fn decode_index(path: &Path, bytes: &[u8]) -> Result<RetrievalIndex> {
    let mut r = Reader::new(path, bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported index version {version}")));
    }
    let n = usize::try_from(r.u64()?).map_err(|_| r.err("entry count too large"))?;
    let d = r.u32()? as usize;
    let ids = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let data = r.f32s(n.checked_mul(d).ok_or_else(|| r.err("size overflow"))?)?;
    r.finish()?;
    RetrievalIndex::from_normalized_parts(ids, d, data).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_index(path: &Path, index: &RetrievalIndex) -> Result<()> {
    write_file(path, &encode_index(index))
}

pub fn read_index(path: &Path) -> Result<RetrievalIndex> {
    decode_index(path, &read_file(path)?)
}
