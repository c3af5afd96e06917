//! Cloze prediction heads over the tied output embeddings.

use ndarray::{Array1, ArrayView1};

use super::encoder::HiddenStates;
use super::params::EncoderParams;
use crate::error::{Error, Result};
use crate::ontology::{EventOntology, EventTypeDef};
use crate::template::InputSequence;
use crate::vocab::Vocabulary;

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Probability over the roles of one event type, in ontology role order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleDistribution {
    pub roles: Vec<String>,
    pub token_ids: Vec<usize>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RoleDistribution {
    pub fn get(&self, role: &str) -> Option<f64> {
        self.roles
            .iter()
            .position(|r| r == role)
            .map(|i| self.probs[i])
    }

    /// Highest-probability role; ties go to the earliest role.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn predicted_role(&self) -> &str {
        &self.roles[self.argmax()]
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Verbalizer token ids of an event type's roles, in role order.
pub fn verbalizer_ids(event_type: &EventTypeDef, vocab: &Vocabulary) -> Result<Vec<usize>> {
    event_type
        .verbalizer_tokens()
        .map(|w| vocab.require(w))
        .collect()
}

/// Role distribution from a hidden vector and verbalizer ids: softmax of
/// `w_v . h` restricted to the role set.
pub fn role_distribution_at(
    hidden: ArrayView1<'_, f64>,
    event_type: &EventTypeDef,
    token_ids: Vec<usize>,
    params: &EncoderParams,
) -> RoleDistribution {
    let logits: Vec<f64> = token_ids
        .iter()
        .map(|&id| params.token_embeddings.row(id).dot(&hidden))
        .collect();
    RoleDistribution {
        roles: event_type.roles.clone(),
        probs: softmax(&logits),
        token_ids,
        logits,
    }
}

pub fn role_distribution(
    hidden: &HiddenStates,
    seq: &InputSequence,
    ontology: &EventOntology,
    event_type: &str,
    params: &EncoderParams,
    vocab: &Vocabulary,
) -> Result<RoleDistribution> {
    let et = ontology.require(event_type)?;
    let ids = verbalizer_ids(et, vocab)?;
    let h = hidden.row(seq.role_mask_index)?;
    Ok(role_distribution_at(h, et, ids, params))
}

/// Full-vocabulary logits of the tied projection at one position.
pub fn vocab_logits(
    hidden: &HiddenStates,
    position: usize,
    params: &EncoderParams,
) -> Result<Array1<f64>> {
    let h = hidden.row(position)?;
    Ok(params.token_embeddings.dot(&h))
}

pub fn vocab_distribution(
    hidden: &HiddenStates,
    position: usize,
    params: &EncoderParams,
) -> Result<Vec<f64>> {
    if position >= hidden.seq_len() {
        return Err(Error::IndexOutOfBounds {
            index: position,
            len: hidden.seq_len(),
        });
    }
    let logits = vocab_logits(hidden, position, params)?;
    Ok(softmax(logits.as_slice().expect("contiguous logits")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;
    use ndarray::Array2;

    fn scalar_softmax(z: &[f64]) -> Vec<f64> {
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        z.iter().map(|v| v.exp() / denom).collect()
    }

    #[test]
    fn softmax_of_one_two_three() {
        let got = softmax(&[1.0, 2.0, 3.0]);
        let want = scalar_softmax(&[1.0, 2.0, 3.0]);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        for (g, w) in got.iter().zip([0.0900, 0.2447, 0.6652]) {
            assert!((g - w).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_dominant_entry() {
        let mut z = vec![0.0; 50];
        z[7] = 20.0;
        assert!(softmax(&z)[7] > 0.999);
        let big = softmax(&[1000.0, 999.0]);
        assert!(big.iter().all(|p| p.is_finite()));
    }

    fn et(n: usize) -> EventTypeDef {
        let roles: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        EventTypeDef {
            name: "E".into(),
            verbalizer: roles.iter().map(|r| (r.clone(), format!("v{r}"))).collect(),
            roles,
        }
    }

    #[test]
    fn zero_hidden_is_uniform() {
        let params = EncoderParams::init(ModelConfig::toy(50), 0).unwrap();
        let hidden = HiddenStates(Array2::zeros((3, 16)));
        let dist = role_distribution_at(hidden.0.row(1), &et(4), vec![40, 41, 42, 43], &params);
        assert!(dist.probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert_eq!(dist.argmax(), 0);
        let single = role_distribution_at(hidden.0.row(1), &et(1), vec![40], &params);
        assert_eq!(single.probs, vec![1.0]);
        let full = vocab_distribution(&hidden, 0, &params).unwrap();
        assert!(full.iter().all(|p| (p - 1.0 / 50.0).abs() < 1e-15));
        assert!(matches!(
            vocab_distribution(&hidden, 3, &params),
            Err(Error::IndexOutOfBounds { index: 3, len: 3 })
        ));
    }
}
