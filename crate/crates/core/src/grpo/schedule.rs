use serde::{Deserialize, Serialize};

use super::{ClipRange, GrpoError};

pub const INITIAL_TEMPERATURE: f64 = 1.0;
pub const INITIAL_EPS_HIGH: f64 = 0.3;
pub const INITIAL_EPS_LOW: f64 = 0.2;

/// Studied `(T, eps_high, eps_low)` end points, each reached linearly from
/// `(1, 0.3, 0.2)`.
pub const SCHEDULE_FINALS: [(f64, f64, f64); 3] = [(1.5, 0.5, 0.4), (2.0, 1.0, 0.4), (3.0, 1.0, 0.4)];

/// Linear schedule of sampling temperature and clip range over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSchedule {
    pub t0: f64,
    pub t_final: f64,
    pub eps_h0: f64,
    pub eps_h_final: f64,
    pub eps_l0: f64,
    pub eps_l_final: f64,
    pub total_steps: u64,
}

/// Parameters in force at one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub temperature: f64,
    pub clip: ClipRange,
}

impl ClipSchedule {
    pub fn new(
        (t0, eps_h0, eps_l0): (f64, f64, f64),
        (t_final, eps_h_final, eps_l_final): (f64, f64, f64),
        total_steps: u64,
    ) -> Result<Self, GrpoError> {
        let s = Self {
            t0,
            t_final,
            eps_h0,
            eps_h_final,
            eps_l0,
            eps_l_final,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    /// Schedule starting from `(1, 0.3, 0.2)`.
    pub fn from_initial(finals: (f64, f64, f64), total_steps: u64) -> Result<Self, GrpoError> {
        Self::new(
            (INITIAL_TEMPERATURE, INITIAL_EPS_HIGH, INITIAL_EPS_LOW),
            finals,
            total_steps,
        )
    }

    /// Fixed `(1, 0.3, 0.2)` throughout.
    pub fn constant(total_steps: u64) -> Self {
        let init = (INITIAL_TEMPERATURE, INITIAL_EPS_HIGH, INITIAL_EPS_LOW);
        Self::new(init, init, total_steps).expect("initial values are valid")
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let finite = [
            self.t0,
            self.t_final,
            self.eps_h0,
            self.eps_h_final,
            self.eps_l0,
            self.eps_l_final,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(GrpoError::InvalidSchedule("values must be finite"));
        }
        if !(self.t0 > 0.0 && self.t_final > 0.0) {
            return Err(GrpoError::InvalidSchedule("temperatures must be positive"));
        }
        if !(self.eps_l0 > 0.0 && self.eps_l_final > 0.0) {
            return Err(GrpoError::InvalidSchedule("clip epsilons must be positive"));
        }
        // Interpolation preserves the order when both end points satisfy it.
        if !(self.eps_h0 >= self.eps_l0 && self.eps_h_final >= self.eps_l_final) {
            return Err(GrpoError::InvalidSchedule("eps_high must not fall below eps_low"));
        }
        Ok(())
    }

    /// Values at `step`, interpolated as `v0 * (1 - f) + v1 * f` with
    /// `f = step / total_steps` so both end points are exact.
    pub fn at(&self, step: u64) -> Result<StepParams, GrpoError> {
        if step > self.total_steps {
            return Err(GrpoError::InvalidStep {
                step,
                total: self.total_steps,
            });
        }
        let f = if self.total_steps == 0 {
            0.0
        } else {
            step as f64 / self.total_steps as f64
        };
        let lerp = |a: f64, b: f64| a * (1.0 - f) + b * f;
        let eps_low = lerp(self.eps_l0, self.eps_l_final);
        let eps_high = lerp(self.eps_h0, self.eps_h_final).max(eps_low);
        Ok(StepParams {
            temperature: lerp(self.t0, self.t_final),
            clip: ClipRange::new(eps_low, eps_high)?,
        })
    }
}
