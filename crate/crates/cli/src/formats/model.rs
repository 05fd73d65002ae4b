//! Model directory: encoder parameters, checkpoint metadata and training
//! history.
//!
//! Parameter file: magic `BREP`, version (u32), then `F`, `D`, `d`, frame
//! layers, splice context and tensor count (all u32), then per tensor its
//! name length (u32), UTF-8 name, rows and cols (u32) and `rows·cols` f32
//! values, row-major.

use std::path::Path;

use biasret_core::contrastive::{HistoryRecord, TrainConfig};
use biasret_core::encoder::EncoderParams;
use biasret_core::math::Mat;
use serde::{Deserialize, Serialize};

use super::{put_f32s, put_u32, read_file, read_json, write_file, write_json, write_jsonl, Reader};
use crate::error::{CliError, Result};

const MAGIC: &[u8; 4] = b"BREP";
const VERSION: u32 = 1;

/// Metadata stored next to the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Hash of `train`, see [`crate::config::config_hash`].
    pub config_hash: String,
    /// Optimizer steps taken.
    pub step: u64,
    pub root_seed: u64,
    pub train: TrainConfig,
}

fn tensor_names(layers: usize) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..layers {
        names.push(format!("frame.{i}.w"));
        names.push(format!("frame.{i}.b"));
    }
    for n in ["text.w", "text.b", "attn.query", "attn_proj.w", "attn_proj.b", "avg_proj.w", "avg_proj.b", "log_inv_temp"] {
        names.push(n.to_string());
    }
    names
}

pub fn encode_params(params: &EncoderParams) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for x in [params.feature_dim(), params.latent_dim(), params.embed_dim(), params.frame_layers(), params.context, tensors.len()] {
        put_u32(&mut out, x);
    }
    for (name, _, m) in tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, m.rows);
        put_u32(&mut out, m.cols);
        put_f32s(&mut out, m.data.iter().map(|&x| x as f32));
    }
    out
}

pub fn decode_params(path: &Path, bytes: &[u8]) -> Result<EncoderParams> {
    let mut r = Reader::new(path, bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported parameter file version {version}")));
    }
    let mut header = [0usize; 6];
    for h in header.iter_mut() {
        *h = r.u32()? as usize;
    }
    let [f, dl, d, layers, context, count] = header;
    let names = tensor_names(layers);
    if count != names.len() {
        return Err(r.err(format!("{count} tensors for {layers} frame layers")));
    }
    let mut mats = Vec::with_capacity(count);
    for expect in &names {
        let len = r.u32()? as usize;
        let name = r.bytes(len)?;
        if name != expect.as_bytes() {
            return Err(r.err(format!("expected tensor {expect}, found {}", String::from_utf8_lossy(name))));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| r.err("size overflow"))?;
        let data = r.f32s(n)?;
        mats.push(Mat::from_vec(rows, cols, data.into_iter().map(f64::from).collect()));
    }
    r.finish()?;
    let params = EncoderParams::from_tensors(mats, context).map_err(|e| CliError::format(path, e.to_string()))?;
    if (params.feature_dim(), params.latent_dim(), params.embed_dim()) != (f, dl, d) || !params.all_finite() {
        return Err(CliError::format(path, "tensors disagree with the header or hold non-finite values"));
    }
    Ok(params)
}

pub fn write_params(path: &Path, params: &EncoderParams) -> Result<()> {
    write_file(path, &encode_params(params))
}

pub fn read_params(path: &Path) -> Result<EncoderParams> {
    decode_params(path, &read_file(path)?)
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_json(path, checkpoint)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_json(path)
}

/// One JSON record per optimizer step: `step`, `epoch`, `loss`, `clap`,
/// `reg`, `alpha`, `lr`, `inv_temp`.
pub fn write_history(path: &Path, history: &[HistoryRecord]) -> Result<()> {
    write_jsonl(path, history)
}
