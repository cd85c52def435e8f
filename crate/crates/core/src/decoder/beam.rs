//! Beam search over any next-token model, ranked by length-normalized
//! log-probability.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BEAM: usize = 5;

/// Next-token log-probabilities given the tokens generated so far.
/// Entries equal to `-inf` are never chosen.
pub trait StepModel {
    fn log_probs(&self, tokens: &[usize]) -> Vec<f64>;
}

impl<F: Fn(&[usize]) -> Vec<f64>> StepModel for F {
    fn log_probs(&self, tokens: &[usize]) -> Vec<f64> {
        self(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Generated tokens per hypothesis, `<eos>` included.
    pub max_len: usize,
    pub eos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    /// Generated tokens; ends with `eos` unless cut at `max_len`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

impl Hypothesis {
    /// Cumulative log-probability divided by token count.
    pub fn score(&self) -> f64 {
        if self.tokens.is_empty() {
            f64::NEG_INFINITY
        } else {
            self.log_prob / self.tokens.len() as f64
        }
    }

    /// Tokens before the terminal `eos`.
    pub fn words(&self, eos: usize) -> &[usize] {
        match self.tokens.last() {
            Some(&t) if t == eos => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Final ranking: higher score, then earlier completion, then smaller token ids.
fn final_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn argmax(lp: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in lp.iter().enumerate() {
        if v.is_nan() || v == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| v > lp[b]) {
            best = Some(i);
        }
    }
    best
}

/// Repeated argmax, lowest id on ties.
pub fn greedy<M: StepModel + ?Sized>(model: &M, max_len: usize, eos: usize) -> Hypothesis {
    let mut h = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
    };
    while h.tokens.len() < max_len {
        let lp = model.log_probs(&h.tokens);
        let Some(t) = argmax(&lp) else { break };
        h.tokens.push(t);
        h.log_prob += lp[t];
        if t == eos {
            break;
        }
    }
    h
}

pub fn beam_search<M: StepModel + Sync + ?Sized>(model: &M, cfg: BeamConfig) -> Result<Hypothesis> {
    if cfg.beam_size == 0 {
        return Err(Error::Invalid("beam size must be at least 1".into()));
    }
    if cfg.max_len == 0 {
        return Ok(Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
        });
    }
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() {
        let expansions: Vec<Vec<f64>> = live.par_iter().map(|h| model.log_probs(&h.tokens)).collect();
        let mut candidates: Vec<Hypothesis> = Vec::new();
        for (h, lp) in live.iter().zip(&expansions) {
            for (t, &l) in lp.iter().enumerate() {
                if l.is_nan() || l == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(t);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob: h.log_prob + l,
                });
            }
        }
        // all candidates share a length, so raw and normalized order agree
        candidates.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens)));
        candidates.truncate(cfg.beam_size);
        live.clear();
        for h in candidates {
            if h.tokens.last() == Some(&cfg.eos) || h.tokens.len() >= cfg.max_len {
                finished.push(h);
            } else {
                live.push(h);
            }
        }
    }
    // keeps the result at least as good as the greedy rollout
    finished.push(greedy(model, cfg.max_len, cfg.eos));
    finished.sort_by(final_order);
    Ok(finished.swap_remove(0))
}
