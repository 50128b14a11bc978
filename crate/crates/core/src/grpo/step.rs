use alloc::vec;
use alloc::vec::Vec;

use super::clip::{clipped_surrogate, surrogate_ratio_grad};
use super::policy::BigramPolicy;
use super::rewards::{advantages, FusionWeights};
use super::schedule::StepParams;
use super::{GrpoError, RolloutGroup};

/// One token of the batch with its group advantage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenTerm {
    pub ctx: usize,
    pub action: usize,
    pub behavior_logprob: f64,
    pub advantage: f64,
}

/// Optional KL pull toward a frozen reference policy.
#[derive(Debug, Clone, PartialEq)]
pub struct KlPenalty {
    pub beta: f64,
    pub reference: BigramPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// d objective / d logit, laid out like [`BigramPolicy::logits`].
    pub values: Vec<f64>,
    pub objective: f64,
    /// Fraction of tokens whose ratio lies outside the clip interval.
    pub clip_fraction: f64,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|g| g * g).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Mean weighted raw reward over all rollouts.
    pub mean_reward: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub objective: f64,
    pub tokens: usize,
}

/// Flattens groups into token terms; every token of a rollout carries the
/// rollout's advantage.
pub fn prepare_tokens(policy: &BigramPolicy, groups: &[RolloutGroup], weights: &FusionWeights) -> Vec<TokenTerm> {
    let mut out = Vec::new();
    for g in groups {
        let adv = advantages(&g.rewards(), weights);
        for (r, a) in g.rollouts.iter().zip(adv) {
            let ctxs = policy.contexts(&r.actions);
            for ((&ctx, &action), &lp) in ctxs.iter().zip(&r.actions).zip(&r.behavior_logprobs) {
                out.push(TokenTerm {
                    ctx,
                    action,
                    behavior_logprob: lp,
                    advantage: a,
                });
            }
        }
    }
    out
}

fn kl_row(p_log: &[f64], q_log: &[f64]) -> f64 {
    p_log.iter().zip(q_log).map(|(lp, lq)| libm::exp(*lp) * (lp - lq)).sum()
}

/// Token-mean of the clipped surrogate minus the optional KL term.
pub fn objective(policy: &BigramPolicy, tokens: &[TokenTerm], params: &StepParams, kl: Option<&KlPenalty>) -> f64 {
    objective_gradient(policy, tokens, params, kl).objective
}

pub fn objective_gradient(
    policy: &BigramPolicy,
    tokens: &[TokenTerm],
    params: &StepParams,
    kl: Option<&KlPenalty>,
) -> Gradient {
    let t = params.temperature;
    let w = policy.width();
    let mut values = vec![0.0; policy.logits().len()];
    if tokens.is_empty() {
        return Gradient {
            values,
            objective: 0.0,
            clip_fraction: 0.0,
        };
    }
    let n = tokens.len() as f64;
    let mut total = 0.0;
    let mut clipped = 0usize;
    for tok in tokens {
        let lps = policy.log_probs(tok.ctx, t);
        let ratio = libm::exp(lps[tok.action] - tok.behavior_logprob);
        if !params.clip.contains(ratio) {
            clipped += 1;
        }
        total += clipped_surrogate(ratio, tok.advantage, &params.clip);
        let g = surrogate_ratio_grad(ratio, tok.advantage, &params.clip) * ratio / (t * n);
        if g != 0.0 {
            let row = &mut values[tok.ctx * w..(tok.ctx + 1) * w];
            for (j, (v, lp)) in row.iter_mut().zip(&lps).enumerate() {
                let indicator = if j == tok.action { 1.0 } else { 0.0 };
                *v += g * (indicator - libm::exp(*lp));
            }
        }
        if let Some(k) = kl.filter(|k| k.beta != 0.0) {
            let lqs = k.reference.log_probs(tok.ctx, t);
            let d = kl_row(&lps, &lqs);
            total -= k.beta * d;
            let row = &mut values[tok.ctx * w..(tok.ctx + 1) * w];
            for ((v, lp), lq) in row.iter_mut().zip(&lps).zip(&lqs) {
                *v -= k.beta * libm::exp(*lp) * (lp - lq - d) / (t * n);
            }
        }
    }
    Gradient {
        values,
        objective: total / n,
        clip_fraction: clipped as f64 / n,
    }
}

/// One gradient-ascent step on the token-level objective.
pub fn grpo_step(
    policy: &mut BigramPolicy,
    groups: &[RolloutGroup],
    params: &StepParams,
    weights: &FusionWeights,
    learning_rate: f64,
    kl: Option<&KlPenalty>,
) -> Result<StepStats, GrpoError> {
    for g in groups {
        g.validate()?;
    }
    let tokens = prepare_tokens(policy, groups, weights);
    let grad = objective_gradient(policy, &tokens, params, kl);
    if grad.values.iter().any(|g| !g.is_finite()) || !grad.objective.is_finite() {
        return Err(GrpoError::NumericalError);
    }
    for (l, g) in policy.logits_mut().iter_mut().zip(&grad.values) {
        *l += learning_rate * g;
    }
    let (sum, count) = groups
        .iter()
        .flat_map(|g| &g.rollouts)
        .fold((0.0, 0usize), |(s, c), r| (s + weights.raw_score(&r.rewards), c + 1));
    Ok(StepStats {
        mean_reward: if count == 0 { 0.0 } else { sum / count as f64 },
        clip_fraction: grad.clip_fraction,
        grad_norm: grad.norm(),
        objective: grad.objective,
        tokens: tokens.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpo::policy::rollout;
    use crate::grpo::{ClipRange, LaughReward, RewardVector, Rollout};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> StepParams {
        StepParams {
            temperature: 1.3,
            clip: ClipRange::new(0.2, 0.3).unwrap(),
        }
    }

    fn sample_group(policy: &BigramPolicy, rng: &mut ChaCha8Rng, g: usize) -> RolloutGroup {
        let rollouts = (0..g)
            .map(|_| {
                let tr = rollout(policy, 1.3, rng, 4);
                Rollout {
                    actions: tr.actions,
                    behavior_logprobs: tr.logprobs,
                    rewards: RewardVector {
                        cer: rng.gen::<f64>(),
                        sim: rng.gen::<f64>(),
                        emo: rng.gen::<f64>(),
                        laugh: LaughReward::NotApplicable,
                    },
                }
            })
            .collect();
        RolloutGroup {
            prompt_id: "p".into(),
            rollouts,
        }
    }

    #[test]
    fn on_policy_has_no_clipping() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut policy = BigramPolicy::random(8, 1.0, &mut rng);
        let groups = [sample_group(&policy, &mut rng, 4)];
        let stats = grpo_step(&mut policy, &groups, &params(), &FusionWeights::default(), 0.1, None).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.grad_norm > 0.0);
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut policy = BigramPolicy::random(8, 1.0, &mut rng);
        let mut group = sample_group(&policy, &mut rng, 4);
        for r in &mut group.rollouts {
            r.rewards = RewardVector::default();
        }
        let before = policy.clone();
        let stats = grpo_step(&mut policy, &[group], &params(), &FusionWeights::default(), 0.5, None).unwrap();
        assert_eq!(policy, before);
        assert_eq!(stats.grad_norm, 0.0);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let behavior = BigramPolicy::random(4, 1.0, &mut rng);
        let groups = [sample_group(&behavior, &mut rng, 4)];
        let mut policy = behavior.clone();
        for l in policy.logits_mut() {
            *l += (rng.gen::<f64>() - 0.5) * 0.1;
        }
        let kl = KlPenalty {
            beta: 0.7,
            reference: BigramPolicy::random(4, 1.0, &mut rng),
        };
        let tokens = prepare_tokens(&policy, &groups, &FusionWeights::default());
        let grad = objective_gradient(&policy, &tokens, &params(), Some(&kl));
        let h = 1e-5;
        for i in 0..policy.logits().len() {
            let mut up = policy.clone();
            up.logits_mut()[i] += h;
            let mut down = policy.clone();
            down.logits_mut()[i] -= h;
            let fd = (objective(&up, &tokens, &params(), Some(&kl)) - objective(&down, &tokens, &params(), Some(&kl)))
                / (2.0 * h);
            assert!(
                (fd - grad.values[i]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "{i}: {fd} vs {}",
                grad.values[i]
            );
        }
    }
}
