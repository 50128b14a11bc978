//! GRPO training on the synthetic task from a JSON config.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dataforge_core::grpo::toy::{train, StepRecord, ToyTask, TrainConfig};
use dataforge_core::grpo::{
    BigramPolicy, ClipSchedule, FusionWeights, INITIAL_EPS_HIGH, INITIAL_EPS_LOW, INITIAL_TEMPERATURE, MAX_RESAMPLES,
};

use crate::{Error, DEFAULT_SEED};

/// `(T, eps_high, eps_low)` at the first and last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEndpoints {
    pub initial: [f64; 3],
    #[serde(rename = "final")]
    pub last: [f64; 3],
}

impl Default for ScheduleEndpoints {
    fn default() -> Self {
        let init = [INITIAL_TEMPERATURE, INITIAL_EPS_HIGH, INITIAL_EPS_LOW];
        Self {
            initial: init,
            last: init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    #[serde(rename = "G")]
    pub group_size: usize,
    pub weights: FusionWeights,
    pub schedule: ScheduleEndpoints,
    pub total_steps: u64,
    pub max_retries: usize,
    pub exclude_sim: bool,
    pub seed: u64,
    pub learning_rate: f64,
    pub prompts_per_step: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub kl_beta: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            weights: FusionWeights::default(),
            schedule: ScheduleEndpoints::default(),
            total_steps: 200,
            max_retries: MAX_RESAMPLES,
            exclude_sim: false,
            seed: DEFAULT_SEED,
            learning_rate: 0.3,
            prompts_per_step: 4,
            max_len: 8,
            epochs: 1,
            kl_beta: 0.0,
        }
    }
}

impl GrpoConfig {
    pub fn schedule(&self) -> Result<ClipSchedule, Error> {
        let [t0, h0, l0] = self.schedule.initial;
        let [t1, h1, l1] = self.schedule.last;
        Ok(ClipSchedule::new((t0, h0, l0), (t1, h1, l1), self.total_steps)?)
    }

    pub fn train_config(&self) -> Result<TrainConfig, Error> {
        Ok(TrainConfig {
            group_size: self.group_size,
            prompts_per_step: self.prompts_per_step,
            weights: self.weights,
            schedule: self.schedule()?,
            max_retries: self.max_retries,
            exclude_sim: self.exclude_sim,
            learning_rate: self.learning_rate,
            max_len: self.max_len,
            epochs: self.epochs,
            kl_beta: self.kl_beta,
        })
    }
}

/// Per-prompt sampling stream: one ChaCha stream per `(step, slot)`.
pub fn stream_rng(seed: u64, prompts_per_step: usize, step: u64, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step * prompts_per_step as u64 + slot as u64);
    rng
}

/// Trains a zero-initialized bigram policy on the default synthetic task.
pub fn run(config: &GrpoConfig) -> Result<(Vec<StepRecord>, BigramPolicy), Error> {
    let task = ToyTask::default();
    let mut policy = BigramPolicy::zeros(task.vocab());
    let tc = config.train_config()?;
    let seed = config.seed;
    let per_step = config.prompts_per_step;
    let records = train(&task, &mut policy, &tc, |step, slot| {
        stream_rng(seed, per_step, step, slot)
    })?;
    Ok((records, policy))
}
