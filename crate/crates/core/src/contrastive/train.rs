use alloc::vec::Vec;

use super::batch::{build_pairs, plan_batches, Batch};
use super::grad::loss_and_grad;
use super::optim::{AdamW, LrSchedule};
use super::schedule::alpha_schedule;
use super::TrainConfig;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::lexicon::HomophoneGraph;
use crate::math;
use crate::rng;
use crate::synth::Corpus;

/// One optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub clap: f64,
    pub reg: f64,
    pub alpha: f64,
    pub lr: f64,
    /// Clipped inverse temperature used in the step.
    pub inv_temp: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    pub history: Vec<HistoryRecord>,
    /// Homophone sets of the training database.
    pub graph: HomophoneGraph,
}

/// Train from a fresh initialization on the corpus training split.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<TrainOutput> {
    let mut encoder = config.encoder.clone();
    encoder.feature_dim = corpus.vocab.prototypes().dim();
    let mut init = EncoderParams::init(&encoder, rng::derive_seed(config.seed, "init", 0))?;
    init.log_inv_temp.data[0] = math::ln(config.init_inv_temp);
    train_from(corpus, config, init)
}

/// Train starting from `init`. The homophone sets are computed on the
/// corpus database at `config.homophone_threshold`.
pub fn train_from(corpus: &Corpus, config: &TrainConfig, init: EncoderParams) -> Result<TrainOutput> {
    config.validate()?;
    if init.feature_dim() != corpus.vocab.prototypes().dim() {
        return Err(Error::config("encoder feature_dim does not match the corpus frames"));
    }
    let graph = HomophoneGraph::build(&corpus.db, config.homophone_threshold);
    let pairs = build_pairs(&corpus.train, &corpus.db);
    if pairs.is_empty() {
        return Err(Error::invalid("training split has no utterance with an oracle bias word"));
    }
    let mut plan = Vec::new();
    for epoch in 0..config.epochs {
        let mut r = rng::indexed_stream(config.seed, "epoch", epoch as u64);
        plan.extend(plan_batches(&pairs, config.batch_size, &mut r).into_iter().map(|b| (epoch, b)));
    }
    let schedule = LrSchedule::new(config.lr_max, config.warmup_ratio, plan.len() as u64);
    let mut params = init;
    let mut opt = AdamW::new(&params, config.beta1, config.beta2, config.adam_eps, config.weight_decay);
    let max_log_temp = math::ln(config.inv_temp_clip);
    let mut history = Vec::with_capacity(plan.len());
    for (step, (epoch, rows)) in plan.into_iter().enumerate() {
        let step = step as u64;
        let alpha = if config.dcl_enabled { alpha_schedule(&config.curriculum.at(step)) } else { 0.0 };
        let mut r = rng::indexed_stream(config.seed, "negatives", step);
        let batch = Batch::assemble(rows, &corpus.train, &corpus.db, &graph, config.n_neg, alpha, config.reg_active(), &mut r)?;
        let (parts, grads) = loss_and_grad(&params, &batch, &corpus.train, &corpus.vocab, config).map_err(|e| match e {
            // Finite but huge weights overflow the forward pass.
            Error::Degenerate(_) if step > 0 => Error::Diverged { step, loss: f64::NAN },
            e => e,
        })?;
        if !parts.total.is_finite() || !grads.all_finite() {
            return Err(Error::Diverged { step, loss: parts.total });
        }
        let lr = schedule.at(step);
        let inv_temp = params.inv_temp(config.inv_temp_clip);
        opt.step(&mut params, &grads, lr, &config.freeze);
        let l = &mut params.log_inv_temp.data[0];
        if *l > max_log_temp {
            *l = max_log_temp;
        }
        if !params.all_finite() {
            return Err(Error::Diverged { step, loss: parts.total });
        }
        history.push(HistoryRecord { step, epoch, loss: parts.total, clap: parts.clap, reg: parts.reg, alpha, lr, inv_temp });
    }
    Ok(TrainOutput { params, history, graph })
}
