//! JSONL corpus of annotated event mentions and the cloze instances built
//! from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::ontology::EventOntology;

/// Role label used for candidates that are not arguments of the event.
pub const NONE_ROLE: &str = "NONE";

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end
    }

    fn fits(&self, len: usize) -> bool {
        !self.is_empty() && self.end <= len
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub span: Span,
    /// `None` marks a negative (non-argument) candidate.
    #[serde(default, deserialize_with = "de_role", serialize_with = "ser_role")]
    pub role: Option<String>,
}

fn de_role<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    Ok(raw.filter(|r| r != NONE_ROLE))
}

fn ser_role<S: serde::Serializer>(role: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(role.as_deref().unwrap_or(NONE_ROLE))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub tokens: Vec<String>,
    pub trigger: Span,
    pub event_type: String,
    pub arguments: Vec<Argument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl EventMention {
    pub fn span_tokens(&self, span: Span) -> &[String] {
        &self.tokens[span.start..span.end]
    }

    /// Validates the mention against the ontology, reporting `line` in errors.
    pub fn validate(&self, ontology: &EventOntology, line: usize) -> Result<()> {
        let len = self.tokens.len();
        let out_of_bounds = |s: Span| Error::SpanOutOfBounds {
            line,
            start: s.start,
            end: s.end,
            len,
        };
        if !self.trigger.fits(len) {
            return Err(out_of_bounds(self.trigger));
        }
        let et = ontology
            .get(&self.event_type)
            .ok_or_else(|| Error::UnknownEventType {
                line: Some(line),
                name: self.event_type.clone(),
            })?;
        for arg in &self.arguments {
            if !arg.span.fits(len) {
                return Err(out_of_bounds(arg.span));
            }
            if let Some(role) = &arg.role {
                if !et.has_role(role) {
                    return Err(Error::UnknownRole {
                        line,
                        event_type: self.event_type.clone(),
                        role: role.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn parse_corpus(text: &str, ontology: &EventOntology) -> Result<Vec<EventMention>> {
    let mut mentions = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mention: EventMention = serde_json::from_str(raw).map_err(|e| Error::Json {
            line: Some(line),
            message: e.to_string(),
        })?;
        mention.validate(ontology, line)?;
        mentions.push(mention);
    }
    Ok(mentions)
}

pub fn load_corpus(path: impl AsRef<Path>, ontology: &EventOntology) -> Result<Vec<EventMention>> {
    parse_corpus(&read_file(path.as_ref())?, ontology)
}

/// Serializes mentions back to the JSONL corpus format.
pub fn to_jsonl(mentions: &[EventMention]) -> String {
    let mut out = String::new();
    for m in mentions {
        out.push_str(&serde_json::to_string(m).expect("mention serializes"));
        out.push('\n');
    }
    out
}

/// One classification unit: a candidate span of one mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeInstance {
    pub instance_id: String,
    pub mention: usize,
    pub candidate_span: Span,
    pub event_type: String,
    pub gold_role: Option<String>,
}

impl ClozeInstance {
    pub fn gold_label(&self) -> &str {
        self.gold_role.as_deref().unwrap_or(NONE_ROLE)
    }
}

/// One instance per annotated argument, ids `"{mention}:{argument}"`, in
/// corpus order.
pub fn build_instances(mentions: &[EventMention]) -> Vec<ClozeInstance> {
    mentions
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| {
            m.arguments
                .iter()
                .enumerate()
                .map(move |(ai, arg)| ClozeInstance {
                    instance_id: format!("{mi}:{ai}"),
                    mention: mi,
                    candidate_span: arg.span,
                    event_type: m.event_type.clone(),
                    gold_role: arg.role.clone(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ontology() -> EventOntology {
        EventOntology::from_json_str(
            r#"{"event_types": [{"name": "Declare-Bankruptcy", "roles": ["Org", "Place"],
                "verbalizer": {"Org": "org", "Place": "place"}}]}"#,
        )
        .unwrap()
    }

    const BANKRUPTCY: &str = r#"{"tokens": ["My","uncle","declared","bankruptcy","in","2003"], "trigger": [2,4], "event_type": "Declare-Bankruptcy", "arguments": [{"span": [0,2], "role": "Org"}]}"#;

    #[test]
    fn parses_the_bankruptcy_line() {
        let ms = parse_corpus(BANKRUPTCY, &ontology()).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].trigger, Span::new(2, 4));
        assert_eq!(ms[0].span_tokens(ms[0].arguments[0].span), ["My", "uncle"]);
        assert_eq!(ms[0].arguments[0].role.as_deref(), Some("Org"));
        assert_eq!(ms[0].split, None);
    }

    #[test]
    fn empty_file_gives_no_mentions() {
        assert!(parse_corpus("", &ontology()).unwrap().is_empty());
        assert!(parse_corpus("\n\n", &ontology()).unwrap().is_empty());
    }

    #[test]
    fn span_out_of_bounds_names_the_line() {
        let bad = BANKRUPTCY.replace("[0,2]", "[5,9]");
        let text = format!("{BANKRUPTCY}\n{bad}\n");
        let err = parse_corpus(&text, &ontology()).unwrap_err();
        assert!(matches!(
            err,
            Error::SpanOutOfBounds {
                line: 2,
                start: 5,
                end: 9,
                len: 6
            }
        ));
        let empty_span = BANKRUPTCY.replace("[0,2]", "[1,1]");
        assert!(matches!(
            parse_corpus(&empty_span, &ontology()).unwrap_err(),
            Error::SpanOutOfBounds { line: 1, .. }
        ));
    }

    #[test]
    fn unknown_type_and_role() {
        let bad_type = BANKRUPTCY.replace("\"Declare-Bankruptcy\"", "\"Life.Die\"");
        assert!(matches!(
            parse_corpus(&bad_type, &ontology()).unwrap_err(),
            Error::UnknownEventType { line: Some(1), .. }
        ));
        let bad_role = BANKRUPTCY.replace("\"Org\"", "\"Victim\"");
        assert!(matches!(
            parse_corpus(&bad_role, &ontology()).unwrap_err(),
            Error::UnknownRole { line: 1, .. }
        ));
    }

    #[test]
    fn none_role_and_null_are_negative_candidates() {
        let none = BANKRUPTCY.replace("\"Org\"", "\"NONE\"");
        let null = BANKRUPTCY.replace("\"Org\"", "null");
        for text in [none, null] {
            let ms = parse_corpus(&text, &ontology()).unwrap();
            assert_eq!(ms[0].arguments[0].role, None);
        }
    }

    #[test]
    fn jsonl_roundtrip() {
        let ms = parse_corpus(BANKRUPTCY, &ontology()).unwrap();
        assert_eq!(parse_corpus(&to_jsonl(&ms), &ontology()).unwrap(), ms);
    }

    fn mention(n_args: usize) -> EventMention {
        EventMention {
            tokens: vec!["a".into(), "b".into(), "c".into()],
            trigger: Span::new(0, 1),
            event_type: "Declare-Bankruptcy".into(),
            arguments: (0..n_args)
                .map(|i| Argument {
                    span: Span::new(1 + i % 2, 2 + i % 2),
                    role: Some("Org".into()),
                })
                .collect(),
            split: None,
        }
    }

    #[test]
    fn instance_ids_follow_corpus_order() {
        let two = build_instances(&[mention(2)]);
        assert_eq!(
            two.iter()
                .map(|i| i.instance_id.as_str())
                .collect::<Vec<_>>(),
            ["0:0", "0:1"]
        );
        assert!(build_instances(&[mention(0)]).is_empty());

        let mentions = vec![mention(1), mention(1), mention(1)];
        let built = build_instances(&mentions);
        let mut expected = Vec::new();
        for (mi, m) in mentions.iter().enumerate() {
            for ai in 0..m.arguments.len() {
                expected.push((format!("{mi}:{ai}"), m.arguments[ai].span));
            }
        }
        let got: Vec<_> = built
            .iter()
            .map(|i| (i.instance_id.clone(), i.candidate_span))
            .collect();
        assert_eq!(got, expected);
    }
}
