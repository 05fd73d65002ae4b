use alloc::vec::Vec;

use crate::encoder::{EncoderParams, FreezeFlags, TensorGroup};
use crate::math;

/// Linear warmup to `lr_max` over `warmup_steps`, then linear decay
/// towards zero at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    /// `warmup_steps = ceil(warmup_ratio · total_steps)`.
    pub fn new(lr_max: f64, warmup_ratio: f64, total_steps: u64) -> Self {
        let warmup = libm::ceil(warmup_ratio * total_steps as f64) as u64;
        LrSchedule { lr_max, warmup_steps: warmup.min(total_steps), total_steps }
    }

    /// Learning rate of the 0-based optimizer step.
    pub fn at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.lr_max * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay = self.total_steps.saturating_sub(self.warmup_steps);
        if decay == 0 {
            return self.lr_max;
        }
        self.lr_max * self.total_steps.saturating_sub(step) as f64 / decay as f64
    }
}

/// Adam with decoupled weight decay. Biases and the temperature are not
/// decayed; frozen tensors are left untouched, moments included.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: EncoderParams,
    v: EncoderParams,
    decay: Vec<bool>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &EncoderParams, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let decay = params
            .tensors()
            .iter()
            .map(|(name, group, _)| *group != TensorGroup::Temperature && !name.ends_with(".b"))
            .collect();
        AdamW { beta1, beta2, eps, weight_decay, m: params.zeros_like(), v: params.zeros_like(), decay, t: 0 }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams, lr: f64, freeze: &FreezeFlags) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let g = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (k, (((group, p), (_, m)), (_, v))) in params.tensors_mut().into_iter().zip(ms).zip(vs).enumerate() {
            if group.frozen(freeze) {
                continue;
            }
            let wd = if self.decay[k] { self.weight_decay } else { 0.0 };
            for i in 0..p.data.len() {
                let gi = g[k].2.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= lr * (mh / (math::sqrt(vh) + self.eps) + wd * p.data[i]);
            }
        }
    }
}
