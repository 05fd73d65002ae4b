//! Speech and bias-word encoders.
//!
//! Speech: every frame goes through a stack of `tanh` affine layers (the
//! frame encoder), the resulting latents `H` (T × D) are pooled over time and
//! projected to the embedding dimension `d`. Two pooling modes exist:
//! average pooling and single-query scaled dot-product attention pooling.
//!
//! Bias words are embedded either acoustically (their canonical synthetic
//! rendering goes through the very same speech path) or textually (a hashed
//! bag of character n-grams through an affine map).
//!
//! Every forward function has a traced twin used by the training code to
//! backpropagate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{self, axpy, dot, Mat};
use crate::rng;
use crate::synth::{FrameSeq, Vocabulary};

/// Buckets of the hashed character n-gram features.
pub const TEXT_FEATURE_DIM: usize = 512;

/// Inverse temperature at initialization, `min(1/0.007, 100)`.
pub const INIT_INV_TEMP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pooling {
    Avg,
    Attn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BiasModality {
    Acoustic,
    Textual,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Avg => "avg",
            Pooling::Attn => "attn",
        }
    }
}

impl BiasModality {
    pub fn name(self) -> &'static str {
        match self {
            BiasModality::Acoustic => "acoustic",
            BiasModality::Textual => "textual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EncoderConfig {
    /// Input feature dimension `F`.
    pub feature_dim: usize,
    /// Frame latent dimension `D`.
    pub latent_dim: usize,
    /// Number of `tanh` layers in the frame encoder (1 or 2).
    pub frame_layers: usize,
    /// Neighbouring frames spliced on each side of every input frame; the
    /// first layer sees `(2·context + 1)·F` values. Edges repeat the first
    /// and last frame.
    pub context: usize,
    /// Embedding dimension `d`.
    pub embed_dim: usize,
    pub pooling: Pooling,
    pub modality: BiasModality,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            feature_dim: 16,
            latent_dim: 64,
            frame_layers: 1,
            context: 1,
            embed_dim: 64,
            pooling: Pooling::Attn,
            modality: BiasModality::Acoustic,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.latent_dim == 0 || self.embed_dim == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if !(1..=2).contains(&self.frame_layers) {
            return Err(Error::config("frame_layers must be 1 or 2"));
        }
        if self.context > 8 {
            return Err(Error::config("context must be at most 8"));
        }
        Ok(())
    }
}

/// Which parameter groups receive no updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FreezeFlags {
    pub frame_encoder: bool,
    pub text_encoder: bool,
    pub pooling: bool,
    pub temperature: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out × in
    pub w: Mat,
    /// out × 1
    pub b: Mat,
}

/// All trainable tensors. The same struct doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub frame: Vec<Layer>,
    pub text_w: Mat,
    pub text_b: Mat,
    pub attn_query: Mat,
    pub attn_proj: Layer,
    pub avg_proj: Layer,
    /// 1 × 1, log of the (unclipped) inverse temperature.
    pub log_inv_temp: Mat,
    /// Frame splicing width, see [`EncoderConfig::context`].
    pub context: usize,
}

/// Coarse grouping of tensors, used for freezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorGroup {
    FrameEncoder,
    TextEncoder,
    Pooling,
    Temperature,
}

impl TensorGroup {
    pub fn frozen(self, flags: &FreezeFlags) -> bool {
        match self {
            TensorGroup::FrameEncoder => flags.frame_encoder,
            TensorGroup::TextEncoder => flags.text_encoder,
            TensorGroup::Pooling => flags.pooling,
            TensorGroup::Temperature => flags.temperature,
        }
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut rng::Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

impl EncoderParams {
    /// Random initialization: weights `N(0, 1/fan_in)`, biases and the
    /// attention query zero. Both pooling projections start from the same
    /// draw, so the two pooling modes are identical before training.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, "init");
        let (f, dl, d) = (config.feature_dim, config.latent_dim, config.embed_dim);
        let mut frame = Vec::new();
        let mut fan_in = f * (2 * config.context + 1);
        for _ in 0..config.frame_layers {
            frame.push(Layer { w: gaussian(dl, fan_in, 1.0 / math::sqrt(fan_in as f64), &mut r), b: Mat::zeros(dl, 1) });
            fan_in = dl;
        }
        let proj = Layer { w: gaussian(d, dl, 1.0 / math::sqrt(dl as f64), &mut r), b: Mat::zeros(d, 1) };
        let text_w = gaussian(d, TEXT_FEATURE_DIM, 1.0, &mut r);
        Ok(EncoderParams {
            frame,
            text_w,
            text_b: Mat::zeros(d, 1),
            attn_query: Mat::zeros(dl, 1),
            attn_proj: proj.clone(),
            avg_proj: proj,
            log_inv_temp: Mat::from_vec(1, 1, vec![math::ln(INIT_INV_TEMP)]),
            context: config.context,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        let zl = |l: &Layer| Layer { w: z(&l.w), b: z(&l.b) };
        EncoderParams {
            frame: self.frame.iter().map(zl).collect(),
            text_w: z(&self.text_w),
            text_b: z(&self.text_b),
            attn_query: z(&self.attn_query),
            attn_proj: zl(&self.attn_proj),
            avg_proj: zl(&self.avg_proj),
            log_inv_temp: z(&self.log_inv_temp),
            context: self.context,
        }
    }

    /// Per-frame input dimension `F` (before splicing).
    pub fn feature_dim(&self) -> usize {
        self.frame[0].w.cols / (2 * self.context + 1)
    }

    pub fn latent_dim(&self) -> usize {
        self.attn_query.rows
    }

    pub fn embed_dim(&self) -> usize {
        self.text_b.rows
    }

    pub fn frame_layers(&self) -> usize {
        self.frame.len()
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, TensorGroup, &Mat)> {
        let mut out = Vec::new();
        for (i, l) in self.frame.iter().enumerate() {
            out.push((alloc::format!("frame.{i}.w"), TensorGroup::FrameEncoder, &l.w));
            out.push((alloc::format!("frame.{i}.b"), TensorGroup::FrameEncoder, &l.b));
        }
        out.push(("text.w".into(), TensorGroup::TextEncoder, &self.text_w));
        out.push(("text.b".into(), TensorGroup::TextEncoder, &self.text_b));
        out.push(("attn.query".into(), TensorGroup::Pooling, &self.attn_query));
        out.push(("attn_proj.w".into(), TensorGroup::Pooling, &self.attn_proj.w));
        out.push(("attn_proj.b".into(), TensorGroup::Pooling, &self.attn_proj.b));
        out.push(("avg_proj.w".into(), TensorGroup::Pooling, &self.avg_proj.w));
        out.push(("avg_proj.b".into(), TensorGroup::Pooling, &self.avg_proj.b));
        out.push(("log_inv_temp".into(), TensorGroup::Temperature, &self.log_inv_temp));
        out
    }

    /// Mutable tensors, same order as [`EncoderParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(TensorGroup, &mut Mat)> {
        let mut out: Vec<(TensorGroup, &mut Mat)> = Vec::new();
        for l in self.frame.iter_mut() {
            out.push((TensorGroup::FrameEncoder, &mut l.w));
            out.push((TensorGroup::FrameEncoder, &mut l.b));
        }
        out.push((TensorGroup::TextEncoder, &mut self.text_w));
        out.push((TensorGroup::TextEncoder, &mut self.text_b));
        out.push((TensorGroup::Pooling, &mut self.attn_query));
        out.push((TensorGroup::Pooling, &mut self.attn_proj.w));
        out.push((TensorGroup::Pooling, &mut self.attn_proj.b));
        out.push((TensorGroup::Pooling, &mut self.avg_proj.w));
        out.push((TensorGroup::Pooling, &mut self.avg_proj.b));
        out.push((TensorGroup::Temperature, &mut self.log_inv_temp));
        out
    }

    /// Rebuild from tensors in [`EncoderParams::tensors`] order, checking
    /// that shapes are consistent.
    pub fn from_tensors(tensors: Vec<Mat>, context: usize) -> Result<Self> {
        let n = tensors.len();
        if n != 10 && n != 12 {
            return Err(Error::invalid(alloc::format!("expected 10 or 12 tensors, got {n}")));
        }
        let layers = (n - 8) / 2;
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked");
        let frame: Vec<Layer> = (0..layers).map(|_| Layer { w: next(), b: next() }).collect();
        let p = EncoderParams {
            frame,
            text_w: next(),
            text_b: next(),
            attn_query: next(),
            attn_proj: Layer { w: next(), b: next() },
            avg_proj: Layer { w: next(), b: next() },
            log_inv_temp: next(),
            context,
        };
        p.check_shapes()?;
        Ok(p)
    }

    fn check_shapes(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(alloc::format!("inconsistent tensor shape: {what}")));
        let (dl, d) = (self.attn_query.rows, self.text_b.rows);
        if !self.frame[0].w.cols.is_multiple_of(2 * self.context + 1) {
            return bad("frame.0.w columns not a multiple of the splice width");
        }
        let mut fan_in = self.frame[0].w.cols;
        for l in &self.frame {
            if l.w.cols != fan_in || l.w.rows != dl || l.b.rows != dl || l.b.cols != 1 {
                return bad("frame layer");
            }
            fan_in = dl;
        }
        if self.attn_query.cols != 1 || self.text_b.cols != 1 {
            return bad("vector");
        }
        if self.text_w.rows != d || self.text_w.cols != TEXT_FEATURE_DIM {
            return bad("text.w");
        }
        for p in [&self.attn_proj, &self.avg_proj] {
            if p.w.rows != d || p.w.cols != dl || p.b.rows != d || p.b.cols != 1 {
                return bad("projection");
            }
        }
        if self.log_inv_temp.len() != 1 {
            return bad("log_inv_temp");
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, m)| m.all_finite())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, m)| m.len()).sum()
    }

    /// Inverse temperature after clipping at `clip_max`.
    pub fn inv_temp(&self, clip_max: f64) -> f64 {
        math::exp(self.log_inv_temp.data[0]).min(clip_max)
    }
}

/// A `d`-dimensional embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        math::norm(&self.0)
    }

    /// `e / ‖e‖₂`.
    pub fn normalize(&self) -> Result<Embedding> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Degenerate("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Embedding(self.0.iter().map(|x| x / n).collect()))
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&x| x as f32).collect()
    }
}

/// Frame latents `H`, frame-major (T × D).
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Latents {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// Activations of every frame-encoder layer; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct SpeechTrace {
    acts: Vec<Vec<f64>>,
    widths: Vec<usize>,
}

impl SpeechTrace {
    pub fn latents(&self) -> Latents {
        Latents { dim: *self.widths.last().expect("non-empty"), data: self.acts.last().expect("non-empty").clone() }
    }
}

fn frame_forward(params: &EncoderParams, frames: &FrameSeq) -> Result<SpeechTrace> {
    if frames.dim() != params.feature_dim() {
        return Err(Error::config(alloc::format!(
            "frame dim {} does not match encoder input dim {}",
            frames.dim(),
            params.feature_dim()
        )));
    }
    let t_len = frames.len();
    let (acts0, width0) = splice(frames, params.context);
    let mut acts = vec![acts0];
    let mut widths = vec![width0];
    for layer in &params.frame {
        let input = acts.last().expect("non-empty");
        let w_in = *widths.last().expect("non-empty");
        let mut out = Vec::with_capacity(t_len * layer.w.rows);
        for t in 0..t_len {
            let x = &input[t * w_in..(t + 1) * w_in];
            for r in 0..layer.w.rows {
                out.push(math::tanh(dot(layer.w.row(r), x) + layer.b.data[r]));
            }
        }
        widths.push(layer.w.rows);
        acts.push(out);
    }
    Ok(SpeechTrace { acts, widths })
}

/// Frame-major matrix whose row `t` concatenates frames `t − c ..= t + c`,
/// indices clamped to the sequence.
fn splice(frames: &FrameSeq, c: usize) -> (Vec<f64>, usize) {
    if c == 0 {
        return (frames.as_slice().to_vec(), frames.dim());
    }
    let (t_len, f) = (frames.len(), frames.dim());
    let width = f * (2 * c + 1);
    let mut out = Vec::with_capacity(t_len * width);
    for t in 0..t_len {
        for k in 0..=2 * c {
            let s = (t + k).saturating_sub(c).min(t_len - 1);
            out.extend_from_slice(frames.frame(s));
        }
    }
    (out, width)
}

/// Backprop `d_latents` (T × D) through the frame encoder.
fn frame_backward(params: &EncoderParams, trace: &SpeechTrace, d_latents: Vec<f64>, grads: &mut EncoderParams) {
    let t_len = trace.acts[0].len() / trace.widths[0];
    let mut d_out = d_latents;
    for (li, layer) in params.frame.iter().enumerate().rev() {
        let (w_in, w_out) = (trace.widths[li], trace.widths[li + 1]);
        let out = &trace.acts[li + 1];
        let input = &trace.acts[li];
        let need_input_grad = li > 0;
        let mut d_in = if need_input_grad { vec![0.0; t_len * w_in] } else { Vec::new() };
        let g = &mut grads.frame[li];
        for t in 0..t_len {
            let h = &out[t * w_out..(t + 1) * w_out];
            let dz: Vec<f64> = d_out[t * w_out..(t + 1) * w_out].iter().zip(h).map(|(dh, h)| dh * (1.0 - h * h)).collect();
            let x = &input[t * w_in..(t + 1) * w_in];
            g.w.add_outer(&dz, x, 1.0);
            axpy(&mut g.b.data, 1.0, &dz);
            if need_input_grad {
                layer.w.matvec_t_acc(&dz, &mut d_in[t * w_in..(t + 1) * w_in]);
            }
        }
        d_out = d_in;
    }
}

/// Frame latents of an utterance (no temporal subsampling).
pub fn encode_speech(params: &EncoderParams, frames: &FrameSeq) -> Result<Latents> {
    Ok(frame_forward(params, frames)?.latents())
}

fn column_mean(h: &Latents) -> Vec<f64> {
    let mut m = vec![0.0; h.dim];
    for t in 0..h.len() {
        axpy(&mut m, 1.0, h.frame(t));
    }
    let inv = 1.0 / h.len() as f64;
    m.iter_mut().for_each(|x| *x *= inv);
    m
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let mut y = layer.w.matvec(x);
    axpy(&mut y, 1.0, &layer.b.data);
    y
}

/// Softmax attention weights over frames, logits `q·H_t / √D`.
pub fn attention_weights(query: &[f64], h: &Latents) -> Vec<f64> {
    let scale = 1.0 / math::sqrt(h.dim as f64);
    let logits: Vec<f64> = (0..h.len()).map(|t| dot(query, h.frame(t)) * scale).collect();
    let lse = math::log_sum_exp(logits.iter().copied());
    logits.iter().map(|l| math::exp(l - lse)).collect()
}

fn weighted_sum(w: &[f64], h: &Latents) -> Vec<f64> {
    let mut p = vec![0.0; h.dim];
    for (t, &wt) in w.iter().enumerate() {
        axpy(&mut p, wt, h.frame(t));
    }
    p
}

/// Column mean of `H` through the average-pooling projection.
pub fn pool_avg(params: &EncoderParams, h: &Latents) -> Result<Embedding> {
    if h.is_empty() {
        return Err(Error::invalid("cannot pool zero frames"));
    }
    Ok(Embedding(affine(&params.avg_proj, &column_mean(h))))
}

/// Attention-weighted sum of `H` through the attention projection.
pub fn pool_attn(params: &EncoderParams, h: &Latents) -> Result<Embedding> {
    if h.is_empty() {
        return Err(Error::invalid("cannot pool zero frames"));
    }
    let w = attention_weights(&params.attn_query.data, h);
    Ok(Embedding(affine(&params.attn_proj, &weighted_sum(&w, h))))
}

pub fn pool(params: &EncoderParams, h: &Latents, pooling: Pooling) -> Result<Embedding> {
    match pooling {
        Pooling::Avg => pool_avg(params, h),
        Pooling::Attn => pool_attn(params, h),
    }
}

/// Unnormalized speech embedding.
pub fn embed_speech(params: &EncoderParams, frames: &FrameSeq, pooling: Pooling) -> Result<Embedding> {
    pool(params, &encode_speech(params, frames)?, pooling)
}

/// FNV-1a, 32 bit.
pub fn fnv1a32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(0x811c_9dc5_u32, |h, &b| (h ^ u32::from(b)).wrapping_mul(0x0100_0193))
}

/// Sparse hashed character n-gram features of a word.
///
/// The lower-cased word is wrapped as `<word>`; every n-gram with
/// n ∈ {1, 2, 3} of that string (over bytes) is hashed with FNV-1a and
/// counted in bucket `hash % 512`. Counts are scaled by `1/√(number of
/// n-grams)`. Returned sorted by bucket.
pub fn text_features(word: &str) -> Result<Vec<(usize, f64)>> {
    let w = word.trim().to_lowercase();
    if w.is_empty() {
        return Err(Error::invalid("empty word"));
    }
    let mut s = Vec::with_capacity(w.len() + 2);
    s.push(b'<');
    s.extend_from_slice(w.as_bytes());
    s.push(b'>');
    let mut counts = alloc::collections::BTreeMap::new();
    let mut total = 0usize;
    for n in 1..=3 {
        for gram in s.windows(n) {
            *counts.entry(fnv1a32(gram) as usize % TEXT_FEATURE_DIM).or_insert(0usize) += 1;
            total += 1;
        }
    }
    let scale = 1.0 / math::sqrt(total as f64);
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 * scale)).collect())
}

/// Unnormalized textual bias embedding.
pub fn encode_bias_textual(params: &EncoderParams, word: &str) -> Result<Embedding> {
    let feats = text_features(word)?;
    Ok(Embedding(text_affine(params, &feats)))
}

fn text_affine(params: &EncoderParams, feats: &[(usize, f64)]) -> Vec<f64> {
    let w = &params.text_w;
    (0..w.rows)
        .map(|r| params.text_b.data[r] + feats.iter().map(|&(k, v)| w.get(r, k) * v).sum::<f64>())
        .collect()
}

/// Unnormalized acoustic bias embedding: the canonical rendering of the word
/// through the speech path.
pub fn encode_bias_acoustic(params: &EncoderParams, word: &str, vocab: &Vocabulary, pooling: Pooling) -> Result<Embedding> {
    let frames = vocab.synth_bias_frames(word)?;
    embed_speech(params, &frames, pooling)
}

/// Normalized bias embedding for the configured modality.
pub fn embed_bias(
    params: &EncoderParams,
    word: &str,
    vocab: &Vocabulary,
    modality: BiasModality,
    pooling: Pooling,
) -> Result<Embedding> {
    let raw = match modality {
        BiasModality::Acoustic => encode_bias_acoustic(params, word, vocab, pooling)?,
        BiasModality::Textual => encode_bias_textual(params, word)?,
    };
    raw.normalize()
}

#[derive(Debug, Clone)]
enum PoolTrace {
    Avg { mean: Vec<f64> },
    Attn { weights: Vec<f64>, pooled: Vec<f64> },
}

#[derive(Debug, Clone)]
enum Source {
    Speech { speech: SpeechTrace, pool: PoolTrace },
    Text { feats: Vec<(usize, f64)> },
}

/// Everything needed to backpropagate through one normalized embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingTrace {
    source: Source,
    norm: f64,
    /// The normalized embedding.
    pub unit: Vec<f64>,
}

fn finish(source: Source, raw: Vec<f64>) -> Result<EmbeddingTrace> {
    let norm = math::norm(&raw);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Degenerate("embedding has zero or non-finite norm".into()));
    }
    let unit = raw.iter().map(|x| x / norm).collect();
    Ok(EmbeddingTrace { source, norm, unit })
}

/// Traced forward pass of the normalized speech embedding.
pub fn trace_speech(params: &EncoderParams, frames: &FrameSeq, pooling: Pooling) -> Result<EmbeddingTrace> {
    let speech = frame_forward(params, frames)?;
    let h = speech.latents();
    let (pool, raw) = match pooling {
        Pooling::Avg => {
            let mean = column_mean(&h);
            let raw = affine(&params.avg_proj, &mean);
            (PoolTrace::Avg { mean }, raw)
        }
        Pooling::Attn => {
            let weights = attention_weights(&params.attn_query.data, &h);
            let pooled = weighted_sum(&weights, &h);
            let raw = affine(&params.attn_proj, &pooled);
            (PoolTrace::Attn { weights, pooled }, raw)
        }
    };
    finish(Source::Speech { speech, pool }, raw)
}

/// Traced forward pass of the normalized textual embedding.
pub fn trace_text(params: &EncoderParams, word: &str) -> Result<EmbeddingTrace> {
    let feats = text_features(word)?;
    let raw = text_affine(params, &feats);
    finish(Source::Text { feats }, raw)
}

/// Accumulate into `grads` the gradient of a scalar whose gradient with
/// respect to the normalized embedding is `d_unit`.
pub fn backprop(params: &EncoderParams, trace: &EmbeddingTrace, d_unit: &[f64], grads: &mut EncoderParams) {
    // d raw = (d_unit − u (u·d_unit)) / ‖raw‖
    let proj = dot(&trace.unit, d_unit);
    let d_raw: Vec<f64> = d_unit.iter().zip(&trace.unit).map(|(g, u)| (g - u * proj) / trace.norm).collect();
    match &trace.source {
        Source::Text { feats } => {
            axpy(&mut grads.text_b.data, 1.0, &d_raw);
            let cols = grads.text_w.cols;
            for (r, &g) in d_raw.iter().enumerate() {
                for &(k, v) in feats {
                    grads.text_w.data[r * cols + k] += g * v;
                }
            }
        }
        Source::Speech { speech, pool } => {
            let h = speech.latents();
            let t_len = h.len();
            let dim = h.dim;
            let mut d_h = vec![0.0; t_len * dim];
            match pool {
                PoolTrace::Avg { mean } => {
                    grads.avg_proj.w.add_outer(&d_raw, mean, 1.0);
                    axpy(&mut grads.avg_proj.b.data, 1.0, &d_raw);
                    let mut d_mean = vec![0.0; dim];
                    params.avg_proj.w.matvec_t_acc(&d_raw, &mut d_mean);
                    let inv = 1.0 / t_len as f64;
                    for t in 0..t_len {
                        axpy(&mut d_h[t * dim..(t + 1) * dim], inv, &d_mean);
                    }
                }
                PoolTrace::Attn { weights, pooled } => {
                    grads.attn_proj.w.add_outer(&d_raw, pooled, 1.0);
                    axpy(&mut grads.attn_proj.b.data, 1.0, &d_raw);
                    let mut d_pooled = vec![0.0; dim];
                    params.attn_proj.w.matvec_t_acc(&d_raw, &mut d_pooled);
                    // pooled = Σ w_t H_t,  w = softmax(s),  s_t = q·H_t/√D
                    let d_w: Vec<f64> = (0..t_len).map(|t| dot(h.frame(t), &d_pooled)).collect();
                    let mean_dw = dot(weights, &d_w);
                    let scale = 1.0 / math::sqrt(dim as f64);
                    let q = &params.attn_query.data;
                    for t in 0..t_len {
                        let ds = weights[t] * (d_w[t] - mean_dw);
                        let slot = &mut d_h[t * dim..(t + 1) * dim];
                        axpy(slot, weights[t], &d_pooled);
                        axpy(slot, ds * scale, q);
                        axpy(&mut grads.attn_query.data, ds * scale, h.frame(t));
                    }
                }
            }
            frame_backward(params, speech, d_h, grads);
        }
    }
}
