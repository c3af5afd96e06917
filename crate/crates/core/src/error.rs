use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file not found")]
    FileNotFound { path: PathBuf },

    #[error("malformed JSON{}: {message}", line_suffix(*line))]
    Json {
        line: Option<usize>,
        message: String,
    },

    #[error("event type `{event_type}`: roles `{first}` and `{second}` share verbalizer token `{token}`")]
    DuplicateVerbalizer {
        event_type: String,
        token: String,
        first: String,
        second: String,
    },

    #[error(
        "event type `{event_type}`: verbalizer `{word}` for role `{role}` is not a single token"
    )]
    MultiTokenVerbalizer {
        event_type: String,
        role: String,
        word: String,
    },

    #[error("token `{token}` is not in the vocabulary")]
    UnknownToken { token: String },

    #[error("invalid ontology: {0}")]
    InvalidOntology(String),

    #[error("line {line}: span [{start}, {end}) is outside a sentence of {len} tokens")]
    SpanOutOfBounds {
        line: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("unknown event type `{name}`{}", line_suffix(*line))]
    UnknownEventType { line: Option<usize>, name: String },

    #[error("line {line}: role `{role}` does not belong to event type `{event_type}`")]
    UnknownRole {
        line: usize,
        event_type: String,
        role: String,
    },

    #[error("corpus contains no instances")]
    EmptyCorpus,

    #[error("template has no {{MASK}} placeholder")]
    MissingPlaceholder,

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("question needs {needed} positions but max_len is {max_len}")]
    QuestionTooLong { needed: usize, max_len: usize },

    #[error("question must contain exactly one [MASK], found {found}")]
    MaskCount { found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("gold role `{0}` missing from distribution")]
    GoldRoleMissing(String),

    #[error("non-finite loss (l_eae = {l_eae}, l_mlm = {l_mlm})")]
    NonFiniteLoss { l_eae: f64, l_mlm: f64 },

    #[error("prediction and gold key sets differ ({0})")]
    KeyMismatch(String),

    #[error("checkpoint {0} does not exist")]
    CheckpointMissing(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. }
                | Error::FileNotFound { .. }
                | Error::CheckpointMissing(_)
                | Error::Io { .. }
        )
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}
