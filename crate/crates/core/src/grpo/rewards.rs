use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::laughter::{laughter_reward, LaughterLexicon};
use super::{GrpoError, RewardVector};
use crate::audio::Segment;
use crate::qa::text_error_rate;
use crate::stats;
use crate::text::Lang;

/// Per-dimension fusion weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub cer: f64,
    pub sim: f64,
    pub emo: f64,
    pub laugh: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            cer: 1.0,
            sim: 1.0,
            emo: 1.0,
            laugh: 2.0,
        }
    }
}

impl FusionWeights {
    pub fn only_laugh(weight: f64) -> Self {
        Self {
            cer: 0.0,
            sim: 0.0,
            emo: 0.0,
            laugh: weight,
        }
    }

    pub fn without_sim(self) -> Self {
        Self { sim: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if [self.cer, self.sim, self.emo, self.laugh]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
        {
            Ok(())
        } else {
            Err(GrpoError::InvalidReward("fusion weights must be finite and >= 0"))
        }
    }

    /// Weighted raw reward with CER negated; not-applicable laughter adds 0.
    pub fn raw_score(&self, r: &RewardVector) -> f64 {
        -self.cer * r.cer + self.sim * r.sim + self.emo * r.emo + self.laugh * r.laugh.value().unwrap_or(0.0)
    }
}

/// Z-score with population std; a degenerate dimension maps to zeros.
pub fn regularize_dim(values: &[f64]) -> Vec<f64> {
    stats::z_scores(values)
}

/// Per-dimension z-scores of a group. `laugh[i]` is `None` for rollouts
/// whose laughter reward does not apply, or for every rollout when fewer
/// than two apply.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedRewards {
    pub cer: Vec<f64>,
    pub sim: Vec<f64>,
    pub emo: Vec<f64>,
    pub laugh: Vec<Option<f64>>,
}

pub fn regularize(rewards: &[RewardVector]) -> RegularizedRewards {
    let column = |f: fn(&RewardVector) -> f64| regularize_dim(&rewards.iter().map(f).collect::<Vec<_>>());
    let applicable: Vec<(usize, f64)> = rewards
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.laugh.value().map(|v| (i, v)))
        .collect();
    let mut laugh = alloc::vec![None; rewards.len()];
    if applicable.len() >= 2 {
        let values: Vec<f64> = applicable.iter().map(|&(_, v)| v).collect();
        for (&(i, _), z) in applicable.iter().zip(regularize_dim(&values)) {
            laugh[i] = Some(z);
        }
    }
    RegularizedRewards {
        cer: column(|r| -r.cer),
        sim: column(|r| r.sim),
        emo: column(|r| r.emo),
        laugh,
    }
}

/// Weighted sum of the regularized dimensions. Zero-weight dimensions are
/// skipped entirely.
pub fn fuse(reg: &RegularizedRewards, weights: &FusionWeights) -> Vec<f64> {
    (0..reg.cer.len())
        .map(|i| {
            let mut total = 0.0;
            if weights.cer != 0.0 {
                total += weights.cer * reg.cer[i];
            }
            if weights.sim != 0.0 {
                total += weights.sim * reg.sim[i];
            }
            if weights.emo != 0.0 {
                total += weights.emo * reg.emo[i];
            }
            if weights.laugh != 0.0 {
                if let Some(z) = reg.laugh[i] {
                    total += weights.laugh * z;
                }
            }
            total
        })
        .collect()
}

/// Second z-score over the fused rewards.
pub fn group_advantages(fused: &[f64]) -> Vec<f64> {
    stats::z_scores(fused)
}

/// Full ladder: regularize, fuse, regularize again.
pub fn advantages(rewards: &[RewardVector], weights: &FusionWeights) -> Vec<f64> {
    group_advantages(&fuse(&regularize(rewards), weights))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Speech recognizer over generated audio of type `A`.
pub trait Transcriber<A: ?Sized> {
    fn transcribe(&self, audio: &A) -> Result<String, String>;
    /// Transcript restricted to `span`.
    fn transcribe_span(&self, audio: &A, span: &Segment) -> Result<String, String>;
}

/// Fixed-dimension speaker embedding.
pub trait SpeakerEmbedder<A: ?Sized> {
    fn embed(&self, audio: &A) -> Vec<f64>;
}

/// Emotion match score in `[0, 1]`.
pub trait EmotionClassifier<A: ?Sized> {
    fn score(&self, audio: &A) -> f64;
}

pub trait LaughterDetector<A: ?Sized> {
    fn detect(&self, audio: &A) -> Vec<Segment>;
}

/// The four reward models bundled for scoring one rollout.
pub struct RewardBackends<'a, A: ?Sized> {
    pub asr: &'a dyn Transcriber<A>,
    pub embedder: &'a dyn SpeakerEmbedder<A>,
    pub emotion: &'a dyn EmotionClassifier<A>,
    pub detector: &'a dyn LaughterDetector<A>,
    pub laughter: &'a LaughterLexicon,
    pub lang: Lang,
}

impl<A: ?Sized> RewardBackends<'_, A> {
    pub fn score(&self, text: &str, reference_embedding: &[f64], audio: &A) -> Result<RewardVector, GrpoError> {
        let hyp = self.asr.transcribe(audio).map_err(GrpoError::Backend)?;
        let cer = text_error_rate(text, &hyp, self.lang)?;
        let sim = cosine_similarity(&self.embedder.embed(audio), reference_embedding);
        let emo = self.emotion.score(audio).clamp(0.0, 1.0);
        let segments = self.detector.detect(audio);
        let mut laugh_text = String::new();
        for seg in &segments {
            laugh_text.push_str(&self.asr.transcribe_span(audio, seg).map_err(GrpoError::Backend)?);
        }
        let laugh = laughter_reward(text, self.laughter, &segments, &laugh_text);
        Ok(RewardVector { cer, sim, emo, laugh })
    }
}
