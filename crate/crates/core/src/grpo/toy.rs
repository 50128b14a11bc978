//! A synthetic speech-generation task for exercising the optimizer end to
//! end without neural models.
//!
//! The "audio" of a rollout is its token sequence. Each token has a role
//! that fixes how the stub recognizer, detector and classifiers react to
//! it: vocalized laughter is detected but not transcribed, spoken laughter
//! is detected and read out as a laughter word.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::laughter::LaughterLexicon;
use super::policy::{rollout, BigramPolicy};
use super::rewards::{
    EmotionClassifier, FusionWeights, LaughterDetector, RewardBackends, SpeakerEmbedder, Transcriber,
};
use super::sampling::{dynamic_sample, MAX_RESAMPLES};
use super::schedule::ClipSchedule;
use super::step::{grpo_step, KlPenalty};
use super::{GrpoError, Rollout, RolloutGroup};
use crate::audio::Segment;
use crate::text::Lang;

/// Seconds of audio per token.
pub const TOKEN_DURATION_S: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenRole {
    /// Neutral speech, transcribed as one character.
    Plain,
    /// Vocalized laughter: detected, deleted by the recognizer.
    Laugh,
    /// Laughter read out as a word: detected and transcribed.
    SpokenLaugh,
    /// Emotionally marked speech, transcribed as one character.
    Expressive,
}

/// Token roles plus the prompts the policy is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTask {
    pub roles: Vec<TokenRole>,
    pub prompts: Vec<String>,
    pub reference_embedding: Vec<f64>,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            roles: alloc::vec![
                TokenRole::Plain,
                TokenRole::Laugh,
                TokenRole::SpokenLaugh,
                TokenRole::Expressive
            ],
            prompts: ["好哈哈", "哈哈好", "好好哈哈哈"]
                .iter()
                .map(|s| String::from(*s))
                .collect(),
            reference_embedding: alloc::vec![1.0, 0.5, 0.5, 1.0],
        }
    }
}

impl ToyTask {
    pub fn vocab(&self) -> usize {
        self.roles.len()
    }

    fn role(&self, token: usize) -> Option<TokenRole> {
        self.roles.get(token).copied()
    }

    fn is_laughter(&self, token: usize) -> bool {
        matches!(self.role(token), Some(TokenRole::Laugh | TokenRole::SpokenLaugh))
    }

    fn spoken(&self, token: usize) -> &'static str {
        match self.role(token) {
            Some(TokenRole::Plain | TokenRole::Expressive) => "好",
            Some(TokenRole::SpokenLaugh) => "哈",
            _ => "",
        }
    }

    /// Tokens without the trailing end-of-sequence.
    pub fn audio<'a>(&self, actions: &'a [usize]) -> &'a [usize] {
        match actions.last() {
            Some(&a) if a == self.vocab() => &actions[..actions.len() - 1],
            _ => actions,
        }
    }

    /// Mean untempered probability of emitting a vocalized laughter token,
    /// averaged over every context.
    pub fn laugh_probability(&self, policy: &BigramPolicy) -> f64 {
        let contexts = policy.vocab() + 1;
        let total: f64 = (0..contexts)
            .map(|ctx| {
                let p = policy.probs(ctx, 1.0);
                (0..self.vocab())
                    .filter(|&t| self.role(t) == Some(TokenRole::Laugh))
                    .map(|t| p[t])
                    .sum::<f64>()
            })
            .sum();
        total / contexts as f64
    }

    pub fn backends<'a>(&'a self, lexicon: &'a LaughterLexicon) -> RewardBackends<'a, [usize]> {
        RewardBackends {
            asr: self,
            embedder: self,
            emotion: self,
            detector: self,
            laughter: lexicon,
            lang: Lang::Zh,
        }
    }
}

impl Transcriber<[usize]> for ToyTask {
    fn transcribe(&self, audio: &[usize]) -> Result<String, String> {
        Ok(audio.iter().map(|&t| self.spoken(t)).collect())
    }

    fn transcribe_span(&self, audio: &[usize], span: &Segment) -> Result<String, String> {
        Ok(audio
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let mid = (*i as f64 + 0.5) * TOKEN_DURATION_S;
                span.start_s <= mid && mid < span.end_s
            })
            .map(|(_, &t)| self.spoken(t))
            .collect())
    }
}

impl SpeakerEmbedder<[usize]> for ToyTask {
    fn embed(&self, audio: &[usize]) -> Vec<f64> {
        let mut hist = alloc::vec![0.0; self.vocab()];
        for &t in audio {
            if let Some(h) = hist.get_mut(t) {
                *h += 1.0;
            }
        }
        hist
    }
}

impl EmotionClassifier<[usize]> for ToyTask {
    fn score(&self, audio: &[usize]) -> f64 {
        if audio.iter().any(|&t| self.role(t) == Some(TokenRole::Expressive)) {
            0.95
        } else {
            0.05
        }
    }
}

impl LaughterDetector<[usize]> for ToyTask {
    fn detect(&self, audio: &[usize]) -> Vec<Segment> {
        let mut out = Vec::new();
        let mut start = None;
        for i in 0..=audio.len() {
            let laughing = i < audio.len() && self.is_laughter(audio[i]);
            match (start, laughing) {
                (None, true) => start = Some(i),
                (Some(s), false) => {
                    let seg = Segment::new(s as f64 * TOKEN_DURATION_S, i as f64 * TOKEN_DURATION_S);
                    out.extend(seg.ok());
                    start = None;
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub group_size: usize,
    pub prompts_per_step: usize,
    pub weights: FusionWeights,
    pub schedule: ClipSchedule,
    pub max_retries: usize,
    pub exclude_sim: bool,
    pub learning_rate: f64,
    pub max_len: usize,
    /// Optimizer passes over each batch.
    pub epochs: usize,
    pub kl_beta: f64,
}

impl TrainConfig {
    pub fn new(weights: FusionWeights, schedule: ClipSchedule) -> Self {
        Self {
            group_size: 8,
            prompts_per_step: 4,
            weights,
            schedule,
            max_retries: MAX_RESAMPLES,
            exclude_sim: false,
            learning_rate: 0.3,
            max_len: 8,
            epochs: 1,
            kl_beta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::InvalidGroup("a group needs at least two rollouts"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0 && self.kl_beta >= 0.0) {
            return Err(GrpoError::InvalidSchedule(
                "learning rate and beta must be finite and >= 0",
            ));
        }
        self.weights.validate()?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub retries: usize,
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(rename = "eps_h")]
    pub eps_high: f64,
    #[serde(rename = "eps_l")]
    pub eps_low: f64,
    pub laugh_prob: f64,
}

/// Samples one scored group for `prompt`.
#[allow(clippy::too_many_arguments)]
pub fn sample_group<R: Rng + ?Sized>(
    task: &ToyTask,
    lexicon: &LaughterLexicon,
    policy: &BigramPolicy,
    prompt: &str,
    group_size: usize,
    temperature: f64,
    max_len: usize,
    rng: &mut R,
) -> Result<RolloutGroup, GrpoError> {
    let backends = task.backends(lexicon);
    let mut rollouts = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let tr = rollout(policy, temperature, rng, max_len);
        let rewards = backends.score(prompt, &task.reference_embedding, task.audio(&tr.actions))?;
        rollouts.push(Rollout {
            actions: tr.actions,
            behavior_logprobs: tr.logprobs,
            rewards,
        });
    }
    Ok(RolloutGroup {
        prompt_id: String::from(prompt),
        rollouts,
    })
}

/// Runs `schedule.total_steps` optimizer steps. `rng_for(step, slot)`
/// supplies the sampling stream of each prompt slot so runs are
/// reproducible however prompts are scheduled.
pub fn train<R: Rng, F: FnMut(u64, usize) -> R>(
    task: &ToyTask,
    policy: &mut BigramPolicy,
    config: &TrainConfig,
    mut rng_for: F,
) -> Result<Vec<StepRecord>, GrpoError> {
    config.validate()?;
    if task.prompts.is_empty() || policy.vocab() != task.vocab() {
        return Err(GrpoError::InvalidGroup("task and policy disagree"));
    }
    let lexicon = LaughterLexicon::default();
    let reference = KlPenalty {
        beta: config.kl_beta,
        reference: policy.clone(),
    };
    let kl = (config.kl_beta > 0.0).then_some(&reference);
    let mut records = Vec::new();
    for step in 0..config.schedule.total_steps {
        let params = config.schedule.at(step)?;
        let mut groups = Vec::with_capacity(config.prompts_per_step);
        let mut retries = 0;
        for slot in 0..config.prompts_per_step {
            let prompt = &task.prompts[(step as usize * config.prompts_per_step + slot) % task.prompts.len()];
            let mut rng = rng_for(step, slot);
            let mut sampler = |p: &str| {
                sample_group(
                    task,
                    &lexicon,
                    policy,
                    p,
                    config.group_size,
                    params.temperature,
                    config.max_len,
                    &mut rng,
                )
                .map_err(|e| alloc::format!("{e}"))
            };
            let sampled = dynamic_sample(
                prompt,
                &mut sampler,
                &config.weights,
                config.max_retries,
                config.exclude_sim,
            )?;
            retries += sampled.retries;
            groups.push(sampled.group);
        }
        let mut stats = None;
        for _ in 0..config.epochs.max(1) {
            let s = grpo_step(policy, &groups, &params, &config.weights, config.learning_rate, kl)?;
            stats.get_or_insert(s);
        }
        let stats = stats.expect("at least one epoch");
        records.push(StepRecord {
            step,
            mean_reward: stats.mean_reward,
            clip_fraction: stats.clip_fraction,
            retries,
            temperature: params.temperature,
            eps_high: params.clip.eps_high(),
            eps_low: params.clip.eps_low(),
            laugh_prob: task.laugh_probability(policy),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::LaughReward;

    #[test]
    fn stub_backends() {
        let task = ToyTask::default();
        let lex = LaughterLexicon::default();
        let b = task.backends(&lex);
        // 好 laugh laugh 好
        let audio = [0, 1, 1, 0];
        assert_eq!(b.asr.transcribe(&audio[..]).unwrap(), "好好");
        let segs = b.detector.detect(&audio[..]);
        assert_eq!(segs.len(), 1);
        assert!((segs[0].start_s - 0.04).abs() < 1e-12 && (segs[0].end_s - 0.12).abs() < 1e-12);
        assert_eq!(
            b.score("好哈哈", &task.reference_embedding, &audio[..]).unwrap().laugh,
            LaughReward::One
        );
        let spoken = [0, 2, 1];
        assert_eq!(
            b.score("好哈哈", &task.reference_embedding, &spoken[..]).unwrap().laugh,
            LaughReward::Zero
        );
        assert_eq!(
            b.score("好哈哈", &task.reference_embedding, &[0usize, 3][..])
                .unwrap()
                .laugh,
            LaughReward::NotApplicable
        );
        assert_eq!(b.emotion.score(&[3usize][..]), 0.95);
    }
}
