use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tabular next-token policy conditioned on the previous token.
///
/// Tokens are `0..vocab`. Context `vocab` is the start of sequence and
/// outcome `vocab` is end of sequence, so the table holds
/// `(vocab + 1) * (vocab + 1)` logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramPolicy {
    vocab: usize,
    logits: Vec<f64>,
}

/// Actions (ending with EOS unless truncated) and the tempered
/// log-probability each was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub logprobs: Vec<f64>,
}

impl BigramPolicy {
    pub fn zeros(vocab: usize) -> Self {
        Self {
            vocab,
            logits: vec![0.0; (vocab + 1) * (vocab + 1)],
        }
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(vocab: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab);
        for l in &mut p.logits {
            *l = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
        }
        p
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn bos(&self) -> usize {
        self.vocab
    }

    pub fn eos(&self) -> usize {
        self.vocab
    }

    /// Outcomes per context, `vocab + 1`.
    pub fn width(&self) -> usize {
        self.vocab + 1
    }

    pub fn index(&self, ctx: usize, next: usize) -> usize {
        ctx * self.width() + next
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn logit(&self, ctx: usize, next: usize) -> f64 {
        self.logits[self.index(ctx, next)]
    }

    /// Tempered log-softmax over the outcomes of `ctx`.
    pub fn log_probs(&self, ctx: usize, temperature: f64) -> Vec<f64> {
        let w = self.width();
        let row = &self.logits[ctx * w..(ctx + 1) * w];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l / temperature));
        let lse = max + libm::log(row.iter().map(|&l| libm::exp(l / temperature - max)).sum::<f64>());
        row.iter().map(|&l| l / temperature - lse).collect()
    }

    pub fn probs(&self, ctx: usize, temperature: f64) -> Vec<f64> {
        self.log_probs(ctx, temperature).into_iter().map(libm::exp).collect()
    }

    pub fn log_prob(&self, ctx: usize, next: usize, temperature: f64) -> f64 {
        self.log_probs(ctx, temperature)[next]
    }

    /// Context of every action in `actions`.
    pub fn contexts(&self, actions: &[usize]) -> Vec<usize> {
        let mut ctx = self.bos();
        actions
            .iter()
            .map(|&a| {
                let c = ctx;
                ctx = a;
                c
            })
            .collect()
    }
}

/// Ancestral sampling at `temperature`, at most `max_len` actions.
pub fn rollout<R: Rng + ?Sized>(policy: &BigramPolicy, temperature: f64, rng: &mut R, max_len: usize) -> Trajectory {
    let mut actions = Vec::new();
    let mut logprobs = Vec::new();
    let mut ctx = policy.bos();
    while actions.len() < max_len {
        let lps = policy.log_probs(ctx, temperature);
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut pick = lps.len() - 1;
        for (j, lp) in lps.iter().enumerate() {
            acc += libm::exp(*lp);
            if u < acc {
                pick = j;
                break;
            }
        }
        actions.push(pick);
        logprobs.push(lps[pick]);
        if pick == policy.eos() {
            break;
        }
        ctx = pick;
    }
    Trajectory { actions, logprobs }
}
