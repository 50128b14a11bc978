//! Group relative policy optimization with multi-reward fusion.
//!
//! Each prompt yields a group of rollouts scored on four rewards (CER, SIM,
//! emotion, laughter). Rewards are z-scored per dimension inside the group,
//! fused with weights and z-scored again; the result is the advantage of
//! every token of the rollout. The policy maximizes the token-mean of an
//! asymmetrically clipped surrogate whose clip range and sampling
//! temperature follow a linear schedule. Groups whose advantages collapse
//! to zero are resampled a bounded number of times.

mod clip;
mod laughter;
mod policy;
mod rewards;
mod sampling;
mod schedule;
mod step;
pub mod toy;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use clip::{clipped_surrogate, surrogate_ratio_grad, ClipRange};
pub use laughter::{laughter_reward, LaughterLexicon};
pub use policy::{rollout, BigramPolicy, Trajectory};
pub use rewards::{
    advantages, cosine_similarity, fuse, group_advantages, regularize, regularize_dim, EmotionClassifier,
    FusionWeights, LaughterDetector, RegularizedRewards, RewardBackends, SpeakerEmbedder, Transcriber,
};
pub use sampling::{dynamic_sample, is_homogeneous, RolloutSampler, Sampled, MAX_RESAMPLES};
pub use schedule::{ClipSchedule, StepParams, INITIAL_EPS_HIGH, INITIAL_EPS_LOW, INITIAL_TEMPERATURE, SCHEDULE_FINALS};
pub use step::{grpo_step, objective, objective_gradient, prepare_tokens, Gradient, KlPenalty, StepStats, TokenTerm};

use crate::qa::QaError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("step {step} outside schedule of {total} steps")]
    InvalidStep { step: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("invalid clip range eps_low={eps_low}, eps_high={eps_high}")]
    InvalidClip { eps_low: f64, eps_high: f64 },
    #[error("invalid rollout group: {0}")]
    InvalidGroup(&'static str),
    #[error("invalid reward: {0}")]
    InvalidReward(&'static str),
    #[error("sampler failed: {0}")]
    SamplerError(String),
    #[error("reward backend failed: {0}")]
    Backend(String),
    #[error(transparent)]
    Reward(#[from] QaError),
    #[error("non-finite gradient")]
    NumericalError,
}

/// Laughter reward outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Option<u8>", into = "Option<u8>")]
pub enum LaughReward {
    /// Laughter was vocalized and not transcribed.
    One,
    /// Laughter text was read out as words.
    Zero,
    /// No laughter in the text or none detected; excluded from fusion.
    #[default]
    NotApplicable,
}

impl LaughReward {
    pub fn value(self) -> Option<f64> {
        match self {
            LaughReward::One => Some(1.0),
            LaughReward::Zero => Some(0.0),
            LaughReward::NotApplicable => None,
        }
    }
}

impl From<LaughReward> for Option<u8> {
    fn from(r: LaughReward) -> Self {
        r.value().map(|v| v as u8)
    }
}

impl TryFrom<Option<u8>> for LaughReward {
    type Error = &'static str;

    fn try_from(v: Option<u8>) -> Result<Self, Self::Error> {
        match v {
            Some(1) => Ok(LaughReward::One),
            Some(0) => Ok(LaughReward::Zero),
            None => Ok(LaughReward::NotApplicable),
            Some(_) => Err("laughter reward must be 0, 1 or null"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    /// Character error rate; lower is better.
    pub cer: f64,
    /// Speaker cosine similarity in `[-1, 1]`.
    pub sim: f64,
    /// Emotion match in `[0, 1]`.
    pub emo: f64,
    pub laugh: LaughReward,
}

impl RewardVector {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.cer >= 0.0 && self.cer.is_finite()) {
            return Err(GrpoError::InvalidReward("cer must be a non-negative fraction"));
        }
        if !(-1.0..=1.0).contains(&self.sim) {
            return Err(GrpoError::InvalidReward("sim must lie in [-1, 1]"));
        }
        if !(0.0..=1.0).contains(&self.emo) {
            return Err(GrpoError::InvalidReward("emo must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One sampled completion with the behavior log-probabilities recorded at
/// sampling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// Sampled actions, including a final end-of-sequence if one was drawn.
    pub actions: Vec<usize>,
    pub behavior_logprobs: Vec<f64>,
    pub rewards: RewardVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_id: String,
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.rollouts.len() < 2 {
            return Err(GrpoError::InvalidGroup("a group needs at least two rollouts"));
        }
        for r in &self.rollouts {
            if r.actions.len() != r.behavior_logprobs.len() {
                return Err(GrpoError::InvalidGroup("one log-probability per action"));
            }
            if r.behavior_logprobs.iter().any(|lp| !(lp.is_finite() && *lp <= 0.0)) {
                return Err(GrpoError::InvalidGroup("log-probabilities must be finite and <= 0"));
            }
            r.rewards.validate()?;
        }
        Ok(())
    }

    pub fn rewards(&self) -> Vec<RewardVector> {
        self.rollouts.iter().map(|r| r.rewards).collect()
    }
}
