use alloc::string::String;

use super::rewards::{advantages, FusionWeights};
use super::{GrpoError, RolloutGroup};
use crate::stats;

/// Default cap on resampling a homogeneous group.
pub const MAX_RESAMPLES: usize = 3;

/// Produces one rollout group per call.
pub trait RolloutSampler {
    fn sample(&mut self, prompt: &str) -> Result<RolloutGroup, String>;
}

impl<F: FnMut(&str) -> Result<RolloutGroup, String>> RolloutSampler for F {
    fn sample(&mut self, prompt: &str) -> Result<RolloutGroup, String> {
        self(prompt)
    }
}

/// True when the group's advantages collapse to zero. With `exclude_sim`
/// the speaker similarity dimension does not count.
pub fn is_homogeneous(group: &RolloutGroup, weights: &FusionWeights, exclude_sim: bool) -> bool {
    let w = if exclude_sim { weights.without_sim() } else { *weights };
    let adv = advantages(&group.rewards(), &w);
    stats::std_dev(&adv) < stats::DEGENERATE_STD
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub group: RolloutGroup,
    pub retries: usize,
}

/// Draws groups until one is heterogeneous or `max_retries` resamples have
/// been spent; the last group is returned either way.
pub fn dynamic_sample<S: RolloutSampler + ?Sized>(
    prompt: &str,
    sampler: &mut S,
    weights: &FusionWeights,
    max_retries: usize,
    exclude_sim: bool,
) -> Result<Sampled, GrpoError> {
    let mut retries = 0;
    loop {
        let group = sampler.sample(prompt).map_err(GrpoError::SamplerError)?;
        group.validate()?;
        if retries == max_retries || !is_homogeneous(&group, weights, exclude_sim) {
            return Ok(Sampled { group, retries });
        }
        retries += 1;
    }
}
