//! Event ontology: event types, their ordered role sets and the injective
//! role-to-token verbalizer.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    pub name: String,
    pub roles: Vec<String>,
    pub verbalizer: BTreeMap<String, String>,
}

impl EventTypeDef {
    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.roles.iter().position(|r| r == role)
    }

    /// Verbalizer tokens in role order.
    pub fn verbalizer_tokens(&self) -> impl Iterator<Item = &str> {
        self.roles.iter().map(|r| self.verbalizer[r].as_str())
    }

    fn validate(&self) -> Result<()> {
        if self.roles.is_empty() {
            return Err(Error::InvalidOntology(format!(
                "event type `{}` has no roles",
                self.name
            )));
        }
        let mut seen_roles = HashMap::new();
        for role in &self.roles {
            if seen_roles.insert(role.as_str(), ()).is_some() {
                return Err(Error::InvalidOntology(format!(
                    "event type `{}` lists role `{role}` twice",
                    self.name
                )));
            }
            if role == crate::corpus::NONE_ROLE {
                return Err(Error::InvalidOntology(format!(
                    "event type `{}` uses the reserved role name NONE",
                    self.name
                )));
            }
        }
        for key in self.verbalizer.keys() {
            if !self.has_role(key) {
                return Err(Error::InvalidOntology(format!(
                    "event type `{}` verbalizes unknown role `{key}`",
                    self.name
                )));
            }
        }
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for role in &self.roles {
            let word = self.verbalizer.get(role).ok_or_else(|| {
                Error::InvalidOntology(format!(
                    "event type `{}` has no verbalizer for role `{role}`",
                    self.name
                ))
            })?;
            if word.is_empty() || word.split_whitespace().count() != 1 || word.trim() != word {
                return Err(Error::MultiTokenVerbalizer {
                    event_type: self.name.clone(),
                    role: role.clone(),
                    word: word.clone(),
                });
            }
            if let Some(first) = owner.insert(word.as_str(), role.as_str()) {
                return Err(Error::DuplicateVerbalizer {
                    event_type: self.name.clone(),
                    token: word.clone(),
                    first: first.to_string(),
                    second: role.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOntology", into = "RawOntology")]
pub struct EventOntology {
    event_types: Vec<EventTypeDef>,
}

#[derive(Serialize, Deserialize)]
struct RawOntology {
    event_types: Vec<EventTypeDef>,
}

impl TryFrom<RawOntology> for EventOntology {
    type Error = Error;
    fn try_from(raw: RawOntology) -> Result<Self> {
        Self::new(raw.event_types)
    }
}

impl From<EventOntology> for RawOntology {
    fn from(o: EventOntology) -> Self {
        RawOntology {
            event_types: o.event_types,
        }
    }
}

impl EventOntology {
    pub fn new(event_types: Vec<EventTypeDef>) -> Result<Self> {
        let mut names = HashMap::new();
        for et in &event_types {
            if names.insert(et.name.as_str(), ()).is_some() {
                return Err(Error::InvalidOntology(format!(
                    "event type `{}` defined twice",
                    et.name
                )));
            }
            et.validate()?;
        }
        Ok(Self { event_types })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawOntology = serde_json::from_str(text).map_err(|e| Error::Json {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        raw.try_into()
    }

    pub fn event_types(&self) -> &[EventTypeDef] {
        &self.event_types
    }

    pub fn get(&self, name: &str) -> Option<&EventTypeDef> {
        self.event_types.iter().find(|e| e.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&EventTypeDef> {
        self.get(name).ok_or_else(|| Error::UnknownEventType {
            line: None,
            name: name.to_string(),
        })
    }

    /// Every word the ontology contributes to a vocabulary: verbalizers and
    /// event-type name pieces.
    pub fn words(&self) -> Vec<String> {
        let mut words = Vec::new();
        for et in &self.event_types {
            words.extend(et.verbalizer.values().cloned());
            words.extend(crate::template::event_type_words(&et.name));
        }
        words
    }

    /// Checks that every verbalizer token is a single in-vocabulary token.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        for et in &self.event_types {
            for word in et.verbalizer_tokens() {
                let id = vocab.require(word)?;
                if vocab.is_special(id) {
                    return Err(Error::InvalidOntology(format!(
                        "verbalizer `{word}` of `{}` is a reserved token",
                        et.name
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn load_ontology(path: impl AsRef<Path>) -> Result<EventOntology> {
    EventOntology::from_json_str(&read_file(path.as_ref())?)
}
