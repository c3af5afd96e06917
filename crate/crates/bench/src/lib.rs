//! Shared fixtures for the criterion benchmarks.

use l2a_core::model::{EncoderParams, ModelConfig, PromptEmbeddings};
use l2a_core::pipeline::Dataset;
use l2a_core::synthetic::generate_synthetic_corpus;
use l2a_core::train::{build_examples, Example};
use l2a_core::{QuestionTemplate, Vocabulary};

pub struct Workload {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
    pub prompts: PromptEmbeddings,
    pub examples: Vec<Example>,
}

/// Pseudo-template examples over the default synthetic corpus shape.
pub fn workload(n_sentences: usize, seed: u64) -> Workload {
    let corpus = generate_synthetic_corpus(6, 3, n_sentences, seed).expect("generator");
    let ds = Dataset::new(corpus.ontology, corpus.mentions);
    let template = QuestionTemplate::pseudo(8).expect("template");
    let vocab = ds.vocabulary(&[&template]);
    let params = EncoderParams::init(ModelConfig::toy(vocab.len()), seed).expect("params");
    let prompts = PromptEmbeddings::init_from_vocab(8, &params, &vocab, seed);
    let examples = build_examples(
        &template,
        &ds.ontology,
        &ds.mentions,
        &ds.instances,
        &vocab,
        64,
    )
    .expect("examples");
    Workload {
        vocab,
        params,
        prompts,
        examples,
    }
}
