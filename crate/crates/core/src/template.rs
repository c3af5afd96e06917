//! Question templates and assembly of `[CLS] question [SEP] sentence [SEP]`
//! input sequences.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClozeInstance, EventMention};
use crate::error::{read_file, Error, Result};
use crate::vocab::{self, Vocabulary, MAX_PSEUDO_TOKENS};

pub const ARG_PLACEHOLDER: &str = "{arg}";
pub const EVENT_TYPE_PLACEHOLDER: &str = "{event_type}";
pub const MASK_PLACEHOLDER: &str = "{MASK}";

pub const DEFAULT_PSEUDO_LENGTH: usize = 8;

/// Splits an event type name such as `Transaction.Transfer-Money` into the
/// word tokens used for `{event_type}`.
pub fn event_type_words(name: &str) -> Vec<String> {
    name.split('.')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateFile", into = "TemplateFile")]
pub enum QuestionTemplate {
    Manual { pattern: Vec<String> },
    Pseudo { length: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Manual,
    Pseudo,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    kind: TemplateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pseudo_length: Option<usize>,
}

impl TryFrom<TemplateFile> for QuestionTemplate {
    type Error = Error;
    fn try_from(f: TemplateFile) -> Result<Self> {
        match f.kind {
            TemplateKind::Manual => {
                let pattern = f.pattern.ok_or_else(|| {
                    Error::InvalidTemplate("manual template needs a pattern".into())
                })?;
                QuestionTemplate::manual(&pattern)
            }
            TemplateKind::Pseudo => {
                QuestionTemplate::pseudo(f.pseudo_length.unwrap_or(DEFAULT_PSEUDO_LENGTH))
            }
        }
    }
}

impl From<QuestionTemplate> for TemplateFile {
    fn from(t: QuestionTemplate) -> Self {
        match t {
            QuestionTemplate::Manual { pattern } => TemplateFile {
                kind: TemplateKind::Manual,
                pattern: Some(pattern.join(" ")),
                pseudo_length: None,
            },
            QuestionTemplate::Pseudo { length } => TemplateFile {
                kind: TemplateKind::Pseudo,
                pattern: None,
                pseudo_length: Some(length),
            },
        }
    }
}

impl QuestionTemplate {
    /// Parses a whitespace-separated pattern. Placeholders must be whole tokens.
    pub fn manual(pattern: &str) -> Result<Self> {
        let pattern: Vec<String> = pattern.split_whitespace().map(str::to_string).collect();
        let masks = pattern.iter().filter(|t| *t == MASK_PLACEHOLDER).count();
        match masks {
            0 => return Err(Error::MissingPlaceholder),
            1 => {}
            n => {
                return Err(Error::InvalidTemplate(format!(
                    "pattern has {n} {MASK_PLACEHOLDER} placeholders, expected one"
                )))
            }
        }
        if !pattern
            .iter()
            .any(|t| t == ARG_PLACEHOLDER || t == EVENT_TYPE_PLACEHOLDER)
        {
            return Err(Error::InvalidTemplate(format!(
                "pattern needs {ARG_PLACEHOLDER} or {EVENT_TYPE_PLACEHOLDER}"
            )));
        }
        if pattern.iter().any(|t| t == vocab::MASK) {
            return Err(Error::InvalidTemplate(format!(
                "use {MASK_PLACEHOLDER} instead of a literal {}",
                vocab::MASK
            )));
        }
        Ok(QuestionTemplate::Manual { pattern })
    }

    pub fn pseudo(length: usize) -> Result<Self> {
        if !(1..=MAX_PSEUDO_TOKENS).contains(&length) {
            return Err(Error::InvalidTemplate(format!(
                "pseudo length must be in 1..={MAX_PSEUDO_TOKENS}, got {length}"
            )));
        }
        Ok(QuestionTemplate::Pseudo { length })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: TemplateFile = serde_json::from_str(text).map_err(|e| Error::Json {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&read_file(path.as_ref())?)
    }

    pub fn kind(&self) -> TemplateKind {
        match self {
            QuestionTemplate::Manual { .. } => TemplateKind::Manual,
            QuestionTemplate::Pseudo { .. } => TemplateKind::Pseudo,
        }
    }

    pub fn pseudo_length(&self) -> usize {
        match self {
            QuestionTemplate::Manual { .. } => 0,
            QuestionTemplate::Pseudo { length } => *length,
        }
    }

    /// Literal words of a manual pattern (placeholders excluded).
    pub fn words(&self) -> Vec<String> {
        match self {
            QuestionTemplate::Manual { pattern } => pattern
                .iter()
                .filter(|t| {
                    ![ARG_PLACEHOLDER, EVENT_TYPE_PLACEHOLDER, MASK_PLACEHOLDER]
                        .contains(&t.as_str())
                })
                .cloned()
                .collect(),
            QuestionTemplate::Pseudo { .. } => Vec::new(),
        }
    }

    pub fn render(&self, mention: &EventMention, instance: &ClozeInstance) -> Vec<String> {
        match self {
            QuestionTemplate::Manual { .. } => render_manual_question(mention, instance, self)
                .expect("manual template renders manually"),
            QuestionTemplate::Pseudo { .. } => render_pseudo_question(mention, instance, self)
                .expect("pseudo template renders as pseudo"),
        }
    }
}

pub fn render_manual_question(
    mention: &EventMention,
    instance: &ClozeInstance,
    template: &QuestionTemplate,
) -> Result<Vec<String>> {
    let QuestionTemplate::Manual { pattern } = template else {
        return Err(Error::InvalidTemplate("expected a manual template".into()));
    };
    if !pattern.iter().any(|t| t == MASK_PLACEHOLDER) {
        return Err(Error::MissingPlaceholder);
    }
    let mut out = Vec::with_capacity(pattern.len() + instance.candidate_span.len());
    for tok in pattern {
        match tok.as_str() {
            ARG_PLACEHOLDER => out.extend_from_slice(mention.span_tokens(instance.candidate_span)),
            EVENT_TYPE_PLACEHOLDER => out.extend(event_type_words(&instance.event_type)),
            MASK_PLACEHOLDER => out.push(vocab::MASK.to_string()),
            word => out.push(word.to_string()),
        }
    }
    Ok(out)
}

/// `[u1] .. [uP]`, then the candidate span, then `[MASK]`.
pub fn render_pseudo_question(
    mention: &EventMention,
    instance: &ClozeInstance,
    template: &QuestionTemplate,
) -> Result<Vec<String>> {
    let QuestionTemplate::Pseudo { length } = template else {
        return Err(Error::InvalidTemplate("expected a pseudo template".into()));
    };
    let mut out: Vec<String> = (0..*length).map(vocab::pseudo_token).collect();
    out.extend_from_slice(mention.span_tokens(instance.candidate_span));
    out.push(vocab::MASK.to_string());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSequence {
    pub token_ids: Vec<usize>,
    pub role_mask_index: usize,
    pub question_span: Range<usize>,
    pub sentence_span: Range<usize>,
    /// Position of `[u(j+1)]` at index `j`.
    pub pseudo_slots: Vec<usize>,
    pub instance_id: String,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Decodes ids and splits on `[SEP]` into `(question, sentence)`.
    pub fn decode_segments(&self, vocab: &Vocabulary) -> (Vec<String>, Vec<String>) {
        let mut segments: Vec<Vec<String>> = vec![Vec::new()];
        for &id in &self.token_ids[1..] {
            if id == vocab.sep_id() {
                segments.push(Vec::new());
            } else {
                segments
                    .last_mut()
                    .unwrap()
                    .push(vocab.token(id).to_string());
            }
        }
        let mut it = segments.into_iter();
        (it.next().unwrap_or_default(), it.next().unwrap_or_default())
    }
}

pub fn assemble_sequence(
    question: &[String],
    sentence: &[String],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<InputSequence> {
    let masks: Vec<usize> = question
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == vocab::MASK)
        .map(|(i, _)| i)
        .collect();
    if masks.len() != 1 {
        return Err(Error::MaskCount { found: masks.len() });
    }
    let needed = question.len() + 3;
    if needed > max_len {
        return Err(Error::QuestionTooLong { needed, max_len });
    }
    let sentence = &sentence[..sentence.len().min(max_len - needed)];

    let mut token_ids = Vec::with_capacity(needed + sentence.len());
    token_ids.push(vocab.cls_id());
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (i, tok) in question.iter().enumerate() {
        if let Some(slot) = vocab::pseudo_slot_of(tok) {
            slots.push((slot, i + 1));
        }
        token_ids.push(vocab.id_or_unk(tok));
    }
    token_ids.push(vocab.sep_id());
    let sentence_start = token_ids.len();
    token_ids.extend(sentence.iter().map(|t| vocab.id_or_unk(t)));
    let sentence_end = token_ids.len();
    token_ids.push(vocab.sep_id());

    slots.sort_unstable();
    for (expected, (slot, _)) in slots.iter().enumerate() {
        if *slot != expected {
            return Err(Error::InvalidTemplate(
                "pseudo tokens must be [u1]..[uP] with no gaps or repeats".into(),
            ));
        }
    }

    Ok(InputSequence {
        token_ids,
        role_mask_index: masks[0] + 1,
        question_span: 1..question.len() + 1,
        sentence_span: sentence_start..sentence_end,
        pseudo_slots: slots.into_iter().map(|(_, pos)| pos).collect(),
        instance_id: String::new(),
    })
}

/// Renders the question for an instance and assembles its input sequence.
pub fn encode_instance(
    template: &QuestionTemplate,
    mention: &EventMention,
    instance: &ClozeInstance,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<InputSequence> {
    let question = template.render(mention, instance);
    let mut seq = assemble_sequence(&question, &mention.tokens, vocab, max_len)?;
    seq.instance_id = instance.instance_id.clone();
    Ok(seq)
}
