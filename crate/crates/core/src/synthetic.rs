//! Seeded generator of a small annotated event corpus with a learnable
//! lexical signal per role.
//!
//! Every role owns a pool of argument words, and an argument is usually
//! followed by its role's verbalizer word as a context cue. Sentences are
//! assigned to train/dev/test in an 8/1/1 pattern.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{to_jsonl, Argument, EventMention, Span, Split};
use crate::error::{Error, Result};
use crate::ontology::{EventOntology, EventTypeDef};

const EVENT_TYPES: &[&str] = &[
    "Transaction.Transfer-Money",
    "Business.Declare-Bankruptcy",
    "Conflict.Attack",
    "Justice.Sue",
    "Movement.Transport",
    "Contact.Meet",
    "Life.Die",
    "Personnel.Elect",
    "Transaction.Transfer-Ownership",
    "Justice.Arrest-Jail",
];

const ROLES: &[&str] = &[
    "giver",
    "recipient",
    "beneficiary",
    "place",
    "org",
    "attacker",
    "target",
    "instrument",
    "plaintiff",
    "defendant",
    "adjudicator",
    "artifact",
    "origin",
    "destination",
    "entity",
    "victim",
    "agent",
    "person",
    "buyer",
    "seller",
    "vehicle",
    "money",
    "crime",
    "position",
];

const FILLERS: &[&str] = &[
    "reportedly",
    "yesterday",
    "officials",
    "said",
    "that",
    "after",
    "local",
    "news",
    "on",
    "monday",
    "also",
    "later",
    "while",
    "sources",
    "earlier",
];

const CONNECTIVES: &[&str] = &["and", "with", "near", "for", "from", "to", "by"];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Argument words per role.
pub const ARGUMENT_POOL_SIZE: usize = 6;
/// Probability that an argument is followed by its role's cue word.
pub const CUE_PROBABILITY: f64 = 0.8;
/// Probability that a role of the event type is realized in a sentence.
pub const ROLE_PROBABILITY: f64 = 0.85;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub ontology: EventOntology,
    pub mentions: Vec<EventMention>,
}

impl SyntheticCorpus {
    pub fn ontology_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.ontology).expect("ontology serializes");
        s.push('\n');
        s
    }

    pub fn corpus_jsonl(&self) -> String {
        to_jsonl(&self.mentions)
    }

    pub fn write(&self, ontology_path: &Path, corpus_path: &Path) -> Result<()> {
        for (path, text) in [
            (ontology_path, self.ontology_json()),
            (corpus_path, self.corpus_jsonl()),
        ] {
            std::fs::write(path, text).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }
}

fn nonce_word(rng: &mut impl Rng, taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let word: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS.choose(rng).unwrap(),
                    VOWELS.choose(rng).unwrap()
                )
            })
            .collect();
        if taken.insert(word.clone()) {
            return word;
        }
    }
}

pub fn split_of(sentence_index: usize) -> Split {
    match sentence_index % 10 {
        8 => Split::Dev,
        9 => Split::Test,
        _ => Split::Train,
    }
}

pub fn generate_synthetic_corpus(
    n_event_types: usize,
    roles_per_type: usize,
    n_sentences: usize,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if n_event_types == 0 || roles_per_type == 0 || n_sentences == 0 {
        return Err(Error::InvalidConfig(
            "all generator counts must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: HashSet<String> = ROLES
        .iter()
        .chain(FILLERS)
        .chain(CONNECTIVES)
        .map(|s| s.to_string())
        .chain(["the".to_string()])
        .collect();

    let mut event_types = Vec::with_capacity(n_event_types);
    let mut triggers: Vec<Vec<String>> = Vec::with_capacity(n_event_types);
    for i in 0..n_event_types {
        let name = EVENT_TYPES
            .get(i)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("Synthetic.Type-{i}"));
        let roles: Vec<String> = (0..roles_per_type)
            .map(|j| {
                if roles_per_type <= ROLES.len() {
                    ROLES[(i * roles_per_type + j) % ROLES.len()].to_string()
                } else {
                    format!("role{j}")
                }
            })
            .collect();
        let verbalizer: BTreeMap<String, String> = roles
            .iter()
            .map(|r| (r.clone(), r.to_lowercase()))
            .collect();
        event_types.push(EventTypeDef {
            name,
            roles,
            verbalizer,
        });
        triggers.push((0..2).map(|_| nonce_word(&mut rng, &mut taken)).collect());
    }
    let ontology = EventOntology::new(event_types)?;

    let mut pools: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for et in ontology.event_types() {
        for role in &et.roles {
            if !pools.contains_key(role) {
                let pool = (0..ARGUMENT_POOL_SIZE)
                    .map(|_| nonce_word(&mut rng, &mut taken))
                    .collect();
                pools.insert(role.clone(), pool);
            }
        }
    }

    let mut mentions = Vec::with_capacity(n_sentences);
    for s in 0..n_sentences {
        let et = &ontology.event_types()[rng.gen_range(0..n_event_types)];
        let mut roles: Vec<&String> = et
            .roles
            .iter()
            .filter(|_| rng.gen_bool(ROLE_PROBABILITY))
            .collect();
        if roles.is_empty() {
            roles.push(et.roles.choose(&mut rng).unwrap());
        }
        roles.shuffle(&mut rng);

        let mut tokens: Vec<String> = Vec::new();
        for _ in 0..rng.gen_range(0..=2) {
            tokens.push(FILLERS.choose(&mut rng).unwrap().to_string());
        }
        let mut arguments = Vec::with_capacity(roles.len());
        let mut trigger = None;
        for (k, role) in roles.iter().enumerate() {
            if k > 0 {
                tokens.push(CONNECTIVES.choose(&mut rng).unwrap().to_string());
            }
            let start = tokens.len();
            if rng.gen_bool(0.3) {
                tokens.push("the".into());
            }
            tokens.push(pools[*role].choose(&mut rng).unwrap().clone());
            arguments.push(Argument {
                span: Span::new(start, tokens.len()),
                role: Some((*role).clone()),
            });
            if rng.gen_bool(CUE_PROBABILITY) {
                tokens.push(et.verbalizer[*role].clone());
            }
            if k == 0 {
                let t = triggers[ontology
                    .event_types()
                    .iter()
                    .position(|e| e.name == et.name)
                    .unwrap()]
                .choose(&mut rng)
                .unwrap()
                .clone();
                trigger = Some(Span::new(tokens.len(), tokens.len() + 1));
                tokens.push(t);
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            tokens.push(FILLERS.choose(&mut rng).unwrap().to_string());
        }
        mentions.push(EventMention {
            tokens,
            trigger: trigger.expect("at least one role"),
            event_type: et.name.clone(),
            arguments,
            split: Some(split_of(s)),
        });
    }

    for (i, m) in mentions.iter().enumerate() {
        m.validate(&ontology, i + 1)?;
    }
    Ok(SyntheticCorpus { ontology, mentions })
}
