//! Random masking of sentence tokens for the auxiliary MLM objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::template::InputSequence;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Replacement {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingPlan {
    pub positions: Vec<usize>,
    pub original_ids: Vec<usize>,
    pub replacements: Vec<Replacement>,
}

impl MaskingPlan {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Selects each candidate independently with probability `rate` and applies
/// the 80/10/10 mask/random/keep policy in place. Special tokens are never
/// selected.
pub fn mask_positions(
    token_ids: &mut [usize],
    candidates: impl IntoIterator<Item = usize>,
    rate: f64,
    vocab: &Vocabulary,
    rng: &mut impl Rng,
) -> MaskingPlan {
    let mut plan = MaskingPlan::default();
    if rate <= 0.0 {
        return plan;
    }
    let regular = vocab.regular_ids();
    for pos in candidates {
        let original = token_ids[pos];
        if vocab.is_special(original) || !rng.gen_bool(rate) {
            continue;
        }
        let roll: f64 = rng.gen();
        let replacement = if roll < 0.8 {
            token_ids[pos] = vocab.mask_id();
            Replacement::Mask
        } else if roll < 0.9 && !regular.is_empty() {
            token_ids[pos] = rng.gen_range(regular.clone());
            Replacement::Random
        } else {
            Replacement::Keep
        };
        plan.positions.push(pos);
        plan.original_ids.push(original);
        plan.replacements.push(replacement);
    }
    plan
}

/// Masks sentence-span tokens of a cloze sequence. The question span, the
/// role mask and pseudo slots are untouched.
pub fn apply_random_masking(
    seq: &InputSequence,
    mask_rate: f64,
    vocab: &Vocabulary,
    seed: u64,
) -> (InputSequence, MaskingPlan) {
    assert!(
        (0.0..1.0).contains(&mask_rate),
        "mask_rate must be in [0, 1)"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = seq.clone();
    let plan = mask_positions(
        &mut masked.token_ids,
        seq.sentence_span.clone(),
        mask_rate,
        vocab,
        &mut rng,
    );
    (masked, plan)
}
