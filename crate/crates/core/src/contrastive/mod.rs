//! Contrastive training of the speech and bias encoders.
//!
//! A batch pairs utterances with one of their oracle bias words. The loss is
//! the symmetric cross-entropy over the scaled cosine-similarity matrix
//! between speech embeddings (rows) and bias embeddings (columns: the batch
//! targets followed by sampled negatives). With the curriculum enabled, a
//! growing share of the negatives is drawn from the homophone sets of the
//! oracle words and a dispersion penalty separates homophone embeddings.

mod batch;
mod grad;
mod loss;
mod optim;
mod sampler;
mod schedule;
mod train;

pub use batch::{build_pairs, plan_batches, Batch, Pair};
pub use grad::{grad, grad_check, loss_and_grad, total_loss, GradCheckReport, LossParts};
pub use loss::{clap_loss, masked_clap_loss, reg_loss, similarity_logits, ClapGrad};
pub use optim::{AdamW, LrSchedule};
pub use sampler::{sample_negatives, Negatives};
pub use schedule::{alpha_schedule, CurriculumParams, CurriculumState};
pub use train::{train, train_from, HistoryRecord, TrainOutput};

use crate::encoder::{EncoderConfig, FreezeFlags};

/// Form of the homophone dispersion term.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RegForm {
    /// `max(0, m − ‖b_i − h_j‖)²`: pushes homophones at least `m` apart.
    Hinge,
    /// `‖b_i − h_j‖²` exactly as usually written; this attracts homophones.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    /// Negatives sampled per training pair.
    pub n_neg: usize,
    /// Weight of the dispersion term.
    pub lambda: f64,
    pub reg_form: RegForm,
    /// Hinge margin `m`.
    pub reg_margin: f64,
    pub lr_max: f64,
    pub warmup_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Homophone curriculum and dispersion term on/off.
    pub dcl_enabled: bool,
    pub curriculum: CurriculumParams,
    /// Phoneme edit-distance bound of the homophone sets.
    pub homophone_threshold: usize,
    /// Inverse temperature at initialization, before clipping.
    pub init_inv_temp: f64,
    pub inv_temp_clip: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub freeze: FreezeFlags,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderConfig::default(),
            n_neg: 4,
            lambda: 1.0,
            reg_form: RegForm::Hinge,
            reg_margin: 1.0,
            lr_max: 1e-2,
            warmup_ratio: 0.05,
            epochs: 10,
            batch_size: 8,
            dcl_enabled: true,
            curriculum: CurriculumParams::default(),
            homophone_threshold: 1,
            init_inv_temp: 10.0,
            inv_temp_clip: 100.0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            freeze: FreezeFlags::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for fine-tuning large pretrained encoders: peak learning
    /// rate 1e-4, λ = 0.1, inverse temperature starting at the clip and
    /// homophones within two phoneme edits. The defaults are tuned for the
    /// small synthetic corpora instead.
    pub fn large_scale() -> Self {
        TrainConfig {
            n_neg: 16,
            lambda: 0.1,
            lr_max: 1e-4,
            batch_size: 32,
            homophone_threshold: 2,
            init_inv_temp: crate::encoder::INIT_INV_TEMP,
            encoder: EncoderConfig { context: 0, ..EncoderConfig::default() },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        self.encoder.validate()?;
        self.curriculum.validate()?;
        if self.n_neg == 0 {
            return Err(Error::config("n_neg must be at least 1"));
        }
        if !(self.lambda >= 0.0) || !(self.reg_margin >= 0.0) {
            return Err(Error::config("lambda and reg_margin must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(Error::config("warmup_ratio must lie in [0, 1]"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be positive"));
        }
        if !(self.lr_max > 0.0) || !(self.inv_temp_clip > 0.0) || !(self.init_inv_temp > 0.0) {
            return Err(Error::config("lr_max, init_inv_temp and inv_temp_clip must be positive"));
        }
        Ok(())
    }

    /// Whether the dispersion term contributes.
    pub fn reg_active(&self) -> bool {
        self.dcl_enabled && self.lambda > 0.0
    }
}
