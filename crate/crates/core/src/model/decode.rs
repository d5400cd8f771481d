//! Deterministic greedy decoder with optional residual steering.

use crate::tensor::{ops, Scalar, Tensor};

use super::prompt::PromptSpec;
use super::transformer::{forward_last, Params, ResidualEdit};
use super::Result;

/// One generation step: the argmax token and its probability under the
/// (steered or baseline) model that produced it.
#[derive(Debug, Clone)]
pub struct Step<S> {
    pub token: u32,
    pub prob: S,
}

#[derive(Debug, Clone)]
pub struct Decoded<S: Scalar> {
    /// Answer tokens, end-of-answer excluded.
    pub answer: Vec<u32>,
    /// Every emitted step including the end-of-answer step.
    pub steps: Vec<Step<S>>,
    /// Full next-token distribution at the first step, for probe checks.
    pub step0_probs: Tensor<S>,
}

/// Greedy decoding: argmax each step with ties broken toward the lowest
/// token id, stopping at `eoa` or after `max_new` tokens. Steering edits
/// (when present) apply on every forward step at the fixed prompt-span
/// positions.
pub fn greedy_decode<S: Scalar>(
    params: &Params<S>,
    prompt: &PromptSpec,
    steering: Option<&dyn ResidualEdit<S>>,
    eoa: u32,
    max_new: usize,
) -> Result<Decoded<S>> {
    debug_assert!(max_new >= 1);
    let mut tokens = prompt.tokens.clone();
    let mut steps = Vec::new();
    let mut answer = Vec::new();
    let mut step0_probs = None;

    for step in 0..max_new {
        let logits = forward_last(params, &tokens, steering, None)?;
        let probs = ops::softmax(&logits, 0)?;
        let tok = ops::argmax_tie_low(probs.data()) as u32;
        steps.push(Step {
            token: tok,
            prob: probs.data()[tok as usize],
        });
        if step == 0 {
            step0_probs = Some(probs);
        }
        if tok == eoa {
            break;
        }
        answer.push(tok);
        if tokens.len() == params.cfg.max_seq {
            break;
        }
        tokens.push(tok);
    }

    Ok(Decoded {
        answer,
        steps,
        step0_probs: step0_probs.expect("max_new >= 1 guarantees one step"),
    })
}
