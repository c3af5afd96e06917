//! Nearest-neighbour projection of optimized prompt vectors onto readable
//! vocabulary tokens.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::model::{EncoderParams, PromptEmbeddings};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    /// Euclidean distance; reported similarity is the negated distance.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedToken {
    pub slot: usize,
    pub token: String,
    pub token_id: usize,
    pub similarity: f64,
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

fn score(metric: Metric, p: ArrayView1<'_, f64>, p_norm: f64, e: ArrayView1<'_, f64>) -> f64 {
    match metric {
        Metric::Cosine => {
            let denom = p_norm * norm(e);
            if denom == 0.0 {
                0.0
            } else {
                p.dot(&e) / denom
            }
        }
        Metric::L2 => -p
            .iter()
            .zip(e.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
    }
}

/// For every prompt vector, the regular token whose input embedding scores
/// highest; ties go to the lowest token id.
pub fn project_with_metric(
    prompts: &PromptEmbeddings,
    params: &EncoderParams,
    vocab: &Vocabulary,
    metric: Metric,
) -> Vec<ProjectedToken> {
    prompts
        .vectors
        .rows()
        .into_iter()
        .enumerate()
        .map(|(slot, p)| {
            let p_norm = norm(p);
            if metric == Metric::Cosine && p_norm == 0.0 {
                log::warn!("prompt slot {slot} is the zero vector; cosine similarity is undefined");
            }
            let mut best: Option<(usize, f64)> = None;
            for id in vocab.regular_ids() {
                let s = score(metric, p, p_norm, params.token_embeddings.row(id));
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((id, s));
                }
            }
            let (token_id, similarity) = best.unwrap_or((vocab.pad_id(), 0.0));
            ProjectedToken {
                slot,
                token: vocab.token(token_id).to_string(),
                token_id,
                similarity,
            }
        })
        .collect()
}

pub fn project_pseudo_tokens(
    prompts: &PromptEmbeddings,
    params: &EncoderParams,
    vocab: &Vocabulary,
) -> Vec<ProjectedToken> {
    project_with_metric(prompts, params, vocab, Metric::Cosine)
}

/// Prompts whose vectors are the input embeddings of the projected tokens.
pub fn projected_prompts(
    projection: &[ProjectedToken],
    params: &EncoderParams,
) -> PromptEmbeddings {
    let mut vectors = Array2::zeros((projection.len(), params.config.d_model));
    for (mut row, p) in vectors.rows_mut().into_iter().zip(projection) {
        row.assign(&params.token_embeddings.row(p.token_id));
    }
    PromptEmbeddings { vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn setup() -> (Vocabulary, EncoderParams) {
        let vocab = Vocabulary::from_words(["argument", "event", "is", "of", "the"]);
        let params = EncoderParams::init(ModelConfig::toy(vocab.len()), 5).unwrap();
        (vocab, params)
    }

    #[test]
    fn self_projection() {
        let (vocab, params) = setup();
        let id = vocab.id("event").unwrap();
        let mut prompts = PromptEmbeddings::zeros(1, 16);
        prompts
            .vectors
            .row_mut(0)
            .assign(&params.token_embeddings.row(id));
        let out = project_pseudo_tokens(&prompts, &params, &vocab);
        assert_eq!(out[0].token, "event");
        assert!((out[0].similarity - 1.0).abs() < 1e-12);
        let l2 = project_with_metric(&prompts, &params, &vocab, Metric::L2);
        assert_eq!(l2[0].token, "event");
        assert_eq!(l2[0].similarity, 0.0);
    }

    #[test]
    fn negated_embedding_matches_exhaustive_scan() {
        let (vocab, mut params) = setup();
        let t = vocab.id("of").unwrap();
        // make every other regular row orthogonal to row t
        let e_t = params.token_embeddings.row(t).to_owned();
        let e_norm2 = e_t.dot(&e_t);
        for id in vocab.regular_ids().filter(|&id| id != t) {
            let mut row = params.token_embeddings.row_mut(id);
            let c = row.dot(&e_t) / e_norm2;
            row.scaled_add(-c, &e_t);
        }
        let mut prompts = PromptEmbeddings::zeros(1, 16);
        prompts.vectors.row_mut(0).assign(&(-&e_t));
        let out = project_pseudo_tokens(&prompts, &params, &vocab);

        let p = prompts.vectors.row(0);
        let mut brute = (usize::MAX, f64::NEG_INFINITY);
        for id in vocab.regular_ids() {
            let e = params.token_embeddings.row(id);
            let cos = p.dot(&e) / (p.dot(&p).sqrt() * e.dot(&e).sqrt());
            if cos > brute.1 {
                brute = (id, cos);
            }
        }
        assert_ne!(out[0].token_id, t);
        assert_eq!(out[0].token_id, brute.0);
        assert!((out[0].similarity - brute.1).abs() < 1e-12);
    }

    #[test]
    fn zero_prompt_falls_back_to_first_regular_token() {
        let (vocab, params) = setup();
        let out = project_pseudo_tokens(&PromptEmbeddings::zeros(2, 16), &params, &vocab);
        let first = vocab.regular_ids().next().unwrap();
        for p in &out {
            assert_eq!(p.token_id, first);
            assert_eq!(p.similarity, 0.0);
        }
        assert_eq!(out[1].slot, 1);
    }

    #[test]
    fn projected_prompts_are_embedding_rows() {
        let (vocab, params) = setup();
        let prompts = PromptEmbeddings::init_from_vocab(3, &params, &vocab, 9);
        let proj = project_pseudo_tokens(&prompts, &params, &vocab);
        let snapped = projected_prompts(&proj, &params);
        assert_eq!(snapped, prompts);
    }
}
