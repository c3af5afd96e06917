//! Closed whitespace vocabulary with reserved special and pseudo tokens.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";

/// Number of reserved pseudo-question tokens `[u1]` .. `[u32]`.
pub const MAX_PSEUDO_TOKENS: usize = 32;

pub fn pseudo_token(index: usize) -> String {
    format!("[u{}]", index + 1)
}

/// Returns the zero-based slot of a pseudo token such as `[u3]` (slot 2).
pub fn pseudo_slot_of(token: &str) -> Option<usize> {
    let n: usize = token.strip_prefix("[u")?.strip_suffix(']')?.parse().ok()?;
    (1..=MAX_PSEUDO_TOKENS).contains(&n).then(|| n - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    n_special: usize,
}

fn special_tokens() -> Vec<String> {
    let mut specials: Vec<String> = [PAD, CLS, SEP, MASK, UNK]
        .iter()
        .map(|s| s.to_string())
        .collect();
    specials.extend((0..MAX_PSEUDO_TOKENS).map(pseudo_token));
    specials
}

impl Vocabulary {
    /// Specials first, then the given words in sorted order with duplicates removed.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let specials = special_tokens();
        let n_special = specials.len();
        let regular: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_string())
            .filter(|w| !w.is_empty() && !specials.contains(w))
            .collect();
        let tokens: Vec<String> = specials.into_iter().chain(regular).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            n_special,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn require(&self, token: &str) -> Result<usize> {
        self.id(token).ok_or_else(|| Error::UnknownToken {
            token: token.to_string(),
        })
    }

    /// Maps out-of-vocabulary tokens to `[UNK]`.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(self.index[UNK])
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: usize) -> bool {
        id < self.n_special
    }

    /// Ids of all regular (non-special) tokens, ascending.
    pub fn regular_ids(&self) -> std::ops::Range<usize> {
        self.n_special..self.tokens.len()
    }

    pub fn cls_id(&self) -> usize {
        self.index[CLS]
    }
    pub fn sep_id(&self) -> usize {
        self.index[SEP]
    }
    pub fn mask_id(&self) -> usize {
        self.index[MASK]
    }
    pub fn pad_id(&self) -> usize {
        self.index[PAD]
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        let specials = special_tokens();
        if tokens.len() < specials.len() || tokens[..specials.len()] != specials[..] {
            return Err(Error::InvalidConfig(
                "vocabulary does not start with the reserved special tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate vocabulary token `{t}`"
                )));
            }
        }
        Ok(Self {
            n_special: specials.len(),
            tokens,
            index,
        })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_a_bijection() {
        let v = Vocabulary::from_words(["b", "a", "b", "[MASK]"]);
        assert_eq!(v.len(), 5 + MAX_PSEUDO_TOKENS + 2);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i));
        }
        assert!(v.is_special(v.mask_id()));
        assert!(!v.is_special(v.id("a").unwrap()));
        assert_eq!(v.id_or_unk("zzz"), v.id(UNK).unwrap());
    }

    #[test]
    fn pseudo_slot_parsing() {
        assert_eq!(pseudo_slot_of("[u1]"), Some(0));
        assert_eq!(pseudo_slot_of("[u32]"), Some(31));
        assert_eq!(pseudo_slot_of("[u33]"), None);
        assert_eq!(pseudo_slot_of("[u0]"), None);
        assert_eq!(pseudo_slot_of("u1"), None);
    }

    #[test]
    fn serde_roundtrip_rejects_bad_prefix() {
        let v = Vocabulary::from_words(["x"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>(r#"["x"]"#).is_err());
    }
}
