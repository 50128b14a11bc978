use serde::{Deserialize, Serialize};

use super::GrpoError;

/// Asymmetric clip interval `[1 - eps_low, 1 + eps_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    eps_low: f64,
    eps_high: f64,
}

impl ClipRange {
    pub fn new(eps_low: f64, eps_high: f64) -> Result<Self, GrpoError> {
        if !(eps_low > 0.0 && eps_high >= eps_low && eps_high.is_finite()) {
            return Err(GrpoError::InvalidClip { eps_low, eps_high });
        }
        Ok(Self { eps_low, eps_high })
    }

    pub fn symmetric(eps: f64) -> Result<Self, GrpoError> {
        Self::new(eps, eps)
    }

    pub fn eps_low(&self) -> f64 {
        self.eps_low
    }

    pub fn eps_high(&self) -> f64 {
        self.eps_high
    }

    pub fn lower(&self) -> f64 {
        1.0 - self.eps_low
    }

    pub fn upper(&self) -> f64 {
        1.0 + self.eps_high
    }

    pub fn clamp(&self, ratio: f64) -> f64 {
        ratio.clamp(self.lower(), self.upper())
    }

    pub fn contains(&self, ratio: f64) -> bool {
        self.lower() <= ratio && ratio <= self.upper()
    }
}

/// `min(ratio * A, clip(ratio) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, range: &ClipRange) -> f64 {
    (ratio * advantage).min(range.clamp(ratio) * advantage)
}

/// Derivative of [`clipped_surrogate`] in `ratio`: `A` while the unclipped
/// branch is the minimum, zero once clipping takes over.
pub fn surrogate_ratio_grad(ratio: f64, advantage: f64, range: &ClipRange) -> f64 {
    if ratio * advantage <= range.clamp(ratio) * advantage {
        advantage
    } else {
        0.0
    }
}
