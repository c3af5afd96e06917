//! Cross-entropy role loss, the MLM auxiliary loss and their sum.

use serde::{Deserialize, Serialize};

use super::masking::MaskingPlan;
use crate::error::{Error, Result};
use crate::model::heads::{vocab_logits, RoleDistribution};
use crate::model::{EncoderParams, HiddenStates};
use crate::template::InputSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlmLossForm {
    /// One-vs-rest binary cross-entropy of the softmax against the one-hot target.
    #[default]
    Bce,
    /// Categorical cross-entropy, `-ln q[target]`.
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_eae: f64,
    pub l_mlm: f64,
    pub l_total: f64,
}

pub fn total_loss(l_eae: f64, l_mlm: f64) -> Result<LossBreakdown> {
    if !(l_eae.is_finite() && l_mlm.is_finite()) {
        return Err(Error::NonFiniteLoss { l_eae, l_mlm });
    }
    Ok(LossBreakdown {
        l_eae,
        l_mlm,
        l_total: l_eae + l_mlm,
    })
}

pub fn eae_loss(dist: &RoleDistribution, gold_role: &str) -> Result<f64> {
    let p = dist
        .get(gold_role)
        .ok_or_else(|| Error::GoldRoleMissing(gold_role.to_string()))?;
    Ok(-p.ln())
}

/// Role loss and its gradient w.r.t. the role logits.
pub(crate) fn eae_loss_and_grad(dist: &RoleDistribution, gold: usize) -> (f64, Vec<f64>) {
    let loss = -log_softmax_at(&dist.logits, gold);
    let mut grad = dist.probs.clone();
    grad[gold] -= 1.0;
    (loss, grad)
}

fn log_softmax_at(logits: &[f64], i: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[i] - lse
}

/// Loss at one masked position and its gradient w.r.t. the vocabulary logits.
pub(crate) fn mlm_position_loss_and_grad(
    logits: &[f64],
    target: usize,
    form: MlmLossForm,
) -> (f64, Vec<f64>) {
    let (argmax, max) =
        logits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, z)| {
                if z > best.1 {
                    (i, z)
                } else {
                    best
                }
            });
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let ln_sum = sum.ln();
    let q: Vec<f64> = exps.iter().map(|e| e / sum).collect();

    match form {
        MlmLossForm::Ce => {
            let loss = -(logits[target] - max - ln_sum);
            let mut grad = q;
            grad[target] -= 1.0;
            (loss, grad)
        }
        MlmLossForm::Bce => {
            // 1 - q_v = (S - e_v) / S; for the largest entry S - e_v is summed
            // directly to avoid cancellation.
            let rest_of_max: f64 = exps
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != argmax)
                .map(|(_, e)| e)
                .sum();
            let complement = |v: usize| {
                if v == argmax {
                    rest_of_max
                } else {
                    sum - exps[v]
                }
            };
            let mut loss = -(logits[target] - max - ln_sum);
            let mut odds_sum = 0.0;
            let mut odds = vec![0.0; logits.len()];
            for v in 0..logits.len() {
                if v == target {
                    continue;
                }
                let c = complement(v);
                loss -= c.ln() - ln_sum;
                odds[v] = exps[v] / c;
                odds_sum += odds[v];
            }
            let grad = (0..logits.len())
                .map(|j| q[j] - if j == target { 1.0 } else { 0.0 } + odds[j] - q[j] * odds_sum)
                .collect();
            (loss, grad)
        }
    }
}

pub fn mlm_loss(
    masked_seq: &InputSequence,
    plan: &MaskingPlan,
    hidden: &HiddenStates,
    params: &EncoderParams,
    form: MlmLossForm,
) -> Result<f64> {
    let mut total = 0.0;
    for (&pos, &target) in plan.positions.iter().zip(&plan.original_ids) {
        if pos >= masked_seq.len() {
            return Err(Error::IndexOutOfBounds {
                index: pos,
                len: masked_seq.len(),
            });
        }
        let logits = vocab_logits(hidden, pos, params)?;
        total += mlm_position_loss_and_grad(logits.as_slice().unwrap(), target, form).0;
    }
    Ok(total)
}
