use dataforge_core::grpo::{
    advantages, clipped_surrogate, group_advantages, grpo_step, objective_gradient, prepare_tokens, regularize_dim,
    rollout, surrogate_ratio_grad, BigramPolicy, ClipRange, ClipSchedule, FusionWeights, LaughReward, RewardVector,
    Rollout, RolloutGroup, StepParams, TokenTerm, SCHEDULE_FINALS,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reward() -> impl Strategy<Value = RewardVector> {
    (
        0.0f64..1.0,
        -1.0f64..=1.0,
        0.0f64..=1.0,
        prop::option::of(any::<bool>()),
    )
        .prop_map(|(cer, sim, emo, l)| RewardVector {
            cer,
            sim,
            emo,
            laugh: match l {
                Some(true) => LaughReward::One,
                Some(false) => LaughReward::Zero,
                None => LaughReward::NotApplicable,
            },
        })
}

fn oracle_z(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    if s < 1e-8 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| (x - m) / s).collect()
    }
}

proptest! {
    #[test]
    fn advantages_are_standardized(group in prop::collection::vec(reward(), 2..16)) {
        let adv = advantages(&group, &FusionWeights::default());
        let n = adv.len() as f64;
        let sum: f64 = adv.iter().sum();
        prop_assert!(sum.abs() < 1e-9);
        let var = adv.iter().map(|a| a * a).sum::<f64>() / n;
        prop_assert!(var.abs() < 1e-9 || (var - 1.0).abs() < 1e-9, "variance {}", var);
    }

    #[test]
    fn symmetric_clip_is_ppo(ratio in 1e-6f64..=3.0, adv in -2.0f64..=2.0, eps in 0.01f64..0.9) {
        let r = ClipRange::symmetric(eps).unwrap();
        let ppo = (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
        prop_assert_eq!(clipped_surrogate(ratio, adv, &r), ppo);
    }

    #[test]
    fn ratio_gradient_rule(ratio in 1e-6f64..=3.0, adv in 1e-6f64..=2.0, lo in 0.05f64..0.5, extra in 0.0f64..0.5) {
        let r = ClipRange::new(lo, lo + extra).unwrap();
        let g = surrogate_ratio_grad(ratio, adv, &r);
        if ratio > 1.0 + r.eps_high() {
            prop_assert_eq!(g, 0.0);
        } else {
            prop_assert_eq!(g, adv);
        }
        // Finite-difference check away from the kink.
        let h = 1e-7;
        if (ratio - r.upper()).abs() > 1e-5 && ratio > h {
            let fd = (clipped_surrogate(ratio + h, adv, &r) - clipped_surrogate(ratio - h, adv, &r)) / (2.0 * h);
            prop_assert!((fd - g).abs() < 1e-5);
        }
    }

    #[test]
    fn ladder_consistency(cers in prop::collection::vec(0.0f64..1.0, 2..10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = BigramPolicy::random(4, 0.5, &mut rng);
        let rollouts: Vec<Rollout> = cers
            .iter()
            .map(|&cer| {
                let tr = rollout(&policy, 1.0, &mut rng, 5);
                Rollout { actions: tr.actions, behavior_logprobs: tr.logprobs, rewards: RewardVector { cer, ..RewardVector::default() } }
            })
            .collect();
        let group = RolloutGroup { prompt_id: "p".into(), rollouts };
        let weights = FusionWeights { cer: 1.0, sim: 0.0, emo: 0.0, laugh: 0.0 };
        let params = StepParams { temperature: 1.0, clip: ClipRange::new(0.2, 0.3).unwrap() };

        // Raw dimension z-scored once, then again.
        let raw: Vec<f64> = cers.iter().map(|c| -c).collect();
        let twice = group_advantages(&regularize_dim(&raw));
        let oracle = oracle_z(&oracle_z(&raw));
        for (a, b) in twice.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let manual: Vec<TokenTerm> = group
            .rollouts
            .iter()
            .zip(&twice)
            .flat_map(|(r, &a)| {
                let ctxs = policy.contexts(&r.actions);
                r.actions.iter().zip(ctxs).zip(&r.behavior_logprobs).map(move |((&action, ctx), &lp)| TokenTerm { ctx, action, behavior_logprob: lp, advantage: a }).collect::<Vec<_>>()
            })
            .collect();
        prop_assert_eq!(&prepare_tokens(&policy, std::slice::from_ref(&group), &weights), &manual);

        let mut fused = policy.clone();
        grpo_step(&mut fused, std::slice::from_ref(&group), &params, &weights, 0.1, None).unwrap();
        let mut by_hand = policy.clone();
        let g = objective_gradient(&policy, &manual, &params, None);
        for (l, d) in by_hand.logits_mut().iter_mut().zip(&g.values) {
            *l += 0.1 * d;
        }
        prop_assert_eq!(fused, by_hand);
    }
}

#[test]
fn schedules_keep_eps_order() {
    for total in [1u64, 7, 100, 1000] {
        for fin in SCHEDULE_FINALS {
            let s = ClipSchedule::from_initial(fin, total).unwrap();
            for step in 0..=total {
                let p = s.at(step).unwrap();
                assert!(p.clip.eps_high() >= p.clip.eps_low());
                assert!(p.clip.eps_low() > 0.0 && p.temperature > 0.0);
            }
        }
    }
}

#[test]
fn rollout_logprobs_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let policy = BigramPolicy::random(6, 2.0, &mut rng);
    for t in [0.5, 1.0, 3.0] {
        for row in 0..=policy.vocab() {
            let s: f64 = policy.probs(row, t).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        for _ in 0..200 {
            let tr = rollout(&policy, t, &mut rng, 6);
            assert!(tr.logprobs.iter().all(|lp| lp.is_finite() && *lp <= 0.0));
            assert!(tr.actions.len() <= 6);
        }
    }
}
