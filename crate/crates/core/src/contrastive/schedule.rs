use crate::error::{Error, Result};
use crate::math;

/// Parameters of the sigmoidal homophone-ratio ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CurriculumParams {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Ramp rate per optimizer step.
    pub gamma: f64,
}

impl Default for CurriculumParams {
    fn default() -> Self {
        CurriculumParams { alpha_min: 0.01, alpha_max: 0.5, gamma: 0.05 }
    }
}

impl CurriculumParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0 && self.gamma > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config("curriculum needs 0 <= alpha_min <= alpha_max <= 1 and gamma > 0"))
        }
    }

    pub fn at(&self, step: u64) -> CurriculumState {
        CurriculumState { step, params: *self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumState {
    pub step: u64,
    pub params: CurriculumParams,
}

/// `α_n = α_min + (α_max − α_min)·(2/(1 + e^{−γn}) − 1)`.
pub fn alpha_schedule(state: &CurriculumState) -> f64 {
    let p = &state.params;
    let ramp = 2.0 / (1.0 + math::exp(-p.gamma * state.step as f64)) - 1.0;
    p.alpha_min + (p.alpha_max - p.alpha_min) * ramp
}
