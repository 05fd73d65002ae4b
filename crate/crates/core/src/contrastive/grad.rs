use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;

use super::batch::Batch;
use super::loss::{masked_clap_loss, pair_penalty, similarity_logits};
use super::TrainConfig;
use crate::db::WordId;
use crate::encoder::{self, BiasModality, EmbeddingTrace, EncoderParams};
use crate::error::{Error, Result};
use crate::math::{self, axpy};
use crate::rng;
use crate::synth::{Utterance, Vocabulary};

/// Components of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub clap: f64,
    pub reg: f64,
    pub total: f64,
}

fn bias_trace(params: &EncoderParams, id: WordId, vocab: &Vocabulary, config: &TrainConfig) -> Result<EmbeddingTrace> {
    match config.encoder.modality {
        BiasModality::Acoustic => {
            let frames = vocab.synth_bias_frames_by_id(id)?;
            encoder::trace_speech(params, &frames, config.encoder.pooling)
        }
        BiasModality::Textual => {
            let word = vocab.word(id).ok_or_else(|| Error::invalid(alloc::format!("unknown word id {id}")))?;
            encoder::trace_text(params, word)
        }
    }
}

fn forward_backward(
    params: &EncoderParams,
    batch: &Batch,
    utterances: &[Utterance],
    vocab: &Vocabulary,
    config: &TrainConfig,
    want_grad: bool,
) -> Result<(LossParts, Option<EncoderParams>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let raw_temp = math::exp(params.log_inv_temp.data[0]);
    let clipped = raw_temp > config.inv_temp_clip;
    let inv_temp = if clipped { config.inv_temp_clip } else { raw_temp };

    let speech: Vec<EmbeddingTrace> = batch
        .rows
        .iter()
        .map(|p| encoder::trace_speech(params, &utterances[p.utterance].frames, config.encoder.pooling))
        .collect::<Result<_>>()?;
    let bias_ids = batch.bias_ids();
    let bias: Vec<EmbeddingTrace> =
        bias_ids.iter().map(|&id| bias_trace(params, id, vocab, config)).collect::<Result<_>>()?;
    let m = batch.columns.len();

    let xs: Vec<Vec<f64>> = speech.iter().map(|t| t.unit.clone()).collect();
    let bs: Vec<Vec<f64>> = bias[..m].iter().map(|t| t.unit.clone()).collect();
    let s = similarity_logits(&xs, &bs, inv_temp)?;
    let clap = masked_clap_loss(&s, Some(&batch.mask))?;

    let reg_on = config.reg_active();
    let pos_of = |id: WordId| bias_ids.iter().position(|&b| b == id).expect("bias id traced");
    let d = params.embed_dim();
    let mut d_bias: Vec<Vec<f64>> = alloc::vec![alloc::vec![0.0; d]; bias.len()];
    let mut reg = 0.0;
    if reg_on {
        for &(i, j) in &batch.reg_pairs {
            let (pi, pj) = (pos_of(i), pos_of(j));
            let (pen, g) = pair_penalty(&bias[pi].unit, &bias[pj].unit, config.reg_form, config.reg_margin);
            reg += pen;
            if want_grad {
                axpy(&mut d_bias[pi], config.lambda, &g);
                axpy(&mut d_bias[pj], -config.lambda, &g);
            }
        }
        reg *= config.lambda;
    }
    let parts = LossParts { clap: clap.loss, reg, total: clap.loss + reg };
    if !want_grad {
        return Ok((parts, None));
    }

    let mut grads = params.zeros_like();
    let ds = &clap.d_logits;
    let mut d_temp = 0.0;
    let mut d_speech: Vec<Vec<f64>> = alloc::vec![alloc::vec![0.0; d]; speech.len()];
    for i in 0..speech.len() {
        for j in 0..m {
            let g = ds.get(i, j);
            if g == 0.0 {
                continue;
            }
            axpy(&mut d_speech[i], inv_temp * g, &bs[j]);
            axpy(&mut d_bias[j], inv_temp * g, &xs[i]);
            d_temp += g * s.get(i, j) / inv_temp;
        }
    }
    for (t, g) in speech.iter().zip(&d_speech) {
        encoder::backprop(params, t, g, &mut grads);
    }
    for (t, g) in bias.iter().zip(&d_bias) {
        encoder::backprop(params, t, g, &mut grads);
    }
    // The clip acts as a stop-gradient once exceeded.
    grads.log_inv_temp.data[0] = if clipped { 0.0 } else { d_temp * raw_temp };
    for (group, tensor) in grads.tensors_mut() {
        if group.frozen(&config.freeze) {
            tensor.fill(0.0);
        }
    }
    Ok((parts, Some(grads)))
}

/// Training objective of one batch.
pub fn total_loss(
    params: &EncoderParams,
    batch: &Batch,
    utterances: &[Utterance],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<LossParts> {
    Ok(forward_backward(params, batch, utterances, vocab, config, false)?.0)
}

/// Objective and its gradient with respect to every tensor. Frozen tensors
/// get an all-zero gradient.
pub fn loss_and_grad(
    params: &EncoderParams,
    batch: &Batch,
    utterances: &[Utterance],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(LossParts, EncoderParams)> {
    let (parts, grads) = forward_backward(params, batch, utterances, vocab, config, true)?;
    Ok((parts, grads.expect("requested")))
}

pub fn grad(
    params: &EncoderParams,
    batch: &Batch,
    utterances: &[Utterance],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<EncoderParams> {
    Ok(loss_and_grad(params, batch, utterances, vocab, config)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1e-8, |numeric|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst_tensor: String,
    pub worst_index: usize,
}

/// Compare analytic gradients with fourth-order central differences,
/// `(8[f(x+h) − f(x−h)] − [f(x+2h) − f(x−2h)]) / 12h` with `h = epsilon`,
/// on `n_coords` coordinates drawn at random from the trainable tensors (all
/// of them when there are fewer). The O(h⁴) truncation error allows a step
/// around 1e-3, where roundoff stays far below even gradients of order 1e-6.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    params: &EncoderParams,
    batch: &Batch,
    utterances: &[Utterance],
    vocab: &Vocabulary,
    config: &TrainConfig,
    epsilon: f64,
    n_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grad(params, batch, utterances, vocab, config)?;
    let names = params.tensors();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (ti, (_, group, m)) in names.iter().enumerate() {
        if !group.frozen(&config.freeze) {
            coords.extend((0..m.len()).map(|k| (ti, k)));
        }
    }
    if coords.len() > n_coords {
        let mut r = rng::stream(seed, "grad_check");
        let pick = index::sample(&mut r, coords.len(), n_coords);
        let mut chosen: Vec<(usize, usize)> = pick.into_iter().map(|i| coords[i]).collect();
        chosen.sort_unstable();
        coords = chosen;
    }
    let analytic_t = analytic.tensors();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: coords.len(), worst_tensor: String::new(), worst_index: 0 };
    let mut probe = params.clone();
    for &(ti, k) in &coords {
        let orig = names[ti].2.data[k];
        let eval = |probe: &mut EncoderParams, x: f64| -> Result<f64> {
            probe.tensors_mut()[ti].1.data[k] = x;
            Ok(total_loss(probe, batch, utterances, vocab, config)?.total)
        };
        let d1 = eval(&mut probe, orig + epsilon)? - eval(&mut probe, orig - epsilon)?;
        let d2 = eval(&mut probe, orig + 2.0 * epsilon)? - eval(&mut probe, orig - 2.0 * epsilon)?;
        probe.tensors_mut()[ti].1.data[k] = orig;
        let numeric = (8.0 * d1 - d2) / (12.0 * epsilon);
        let a = analytic_t[ti].2.data[k];
        let rel = libm::fabs(a - numeric) / libm::fmax(libm::fabs(numeric), 1e-8);
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst_tensor = names[ti].0.clone();
            report.worst_index = k;
        }
    }
    Ok(report)
}
