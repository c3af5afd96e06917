#![allow(dead_code)]

use l2a_core::corpus::{build_instances, parse_corpus, ClozeInstance, EventMention};
use l2a_core::model::{EncoderParams, ModelConfig, PromptEmbeddings};
use l2a_core::ontology::EventOntology;
use l2a_core::template::QuestionTemplate;
use l2a_core::train::{build_examples, Example};
use l2a_core::vocab::Vocabulary;

pub const ONTOLOGY: &str = r#"{"event_types": [
  {"name": "Transaction.Transfer-Money", "roles": ["giver", "recipient", "beneficiary", "place"],
   "verbalizer": {"giver": "giver", "recipient": "recipient", "beneficiary": "beneficiary", "place": "place"}},
  {"name": "Business.Declare-Bankruptcy", "roles": ["Org", "Place"],
   "verbalizer": {"Org": "org", "Place": "where"}}]}"#;

pub const CORPUS: &str = r#"{"tokens": ["My","uncle","declared","bankruptcy","in","2003"], "trigger": [2,4], "event_type": "Business.Declare-Bankruptcy", "arguments": [{"span": [0,2], "role": "Org"}]}
{"tokens": ["the","bank","paid","john","for","mary","in","paris","yesterday"], "trigger": [2,3], "event_type": "Transaction.Transfer-Money", "arguments": [{"span": [0,2], "role": "giver"}, {"span": [3,4], "role": "recipient"}, {"span": [5,6], "role": "beneficiary"}, {"span": [7,8], "role": "place"}]}
"#;

pub struct Fixture {
    pub ontology: EventOntology,
    pub mentions: Vec<EventMention>,
    pub instances: Vec<ClozeInstance>,
    pub vocab: Vocabulary,
}

pub fn fixture() -> Fixture {
    let ontology = EventOntology::from_json_str(ONTOLOGY).unwrap();
    let mentions = parse_corpus(CORPUS, &ontology).unwrap();
    let instances = build_instances(&mentions);
    let mut words = ontology.words();
    for m in &mentions {
        words.extend(m.tokens.iter().cloned());
    }
    words.extend(["is", "the", "of", "event"].map(String::from));
    let vocab = Vocabulary::from_words(words);
    Fixture {
        ontology,
        mentions,
        instances,
        vocab,
    }
}

impl Fixture {
    pub fn examples(&self, template: &QuestionTemplate) -> Vec<Example> {
        build_examples(
            template,
            &self.ontology,
            &self.mentions,
            &self.instances,
            &self.vocab,
            64,
        )
        .unwrap()
    }

    pub fn params(&self, seed: u64) -> EncoderParams {
        EncoderParams::init(ModelConfig::toy(self.vocab.len()), seed).unwrap()
    }

    pub fn prompts(&self, params: &EncoderParams, length: usize, seed: u64) -> PromptEmbeddings {
        PromptEmbeddings::init_from_vocab(length, params, &self.vocab, seed)
    }
}

/// Central finite difference of `f` along every index in `coords`.
pub fn central_differences(
    coords: &[usize],
    eps: f64,
    mut f: impl FnMut(usize, f64) -> f64,
) -> Vec<f64> {
    coords
        .iter()
        .map(|&c| (f(c, eps) - f(c, -eps)) / (2.0 * eps))
        .collect()
}
