//! Event argument extraction as a question-based cloze task over a small
//! masked language model, with manual or learned (pseudo) question templates.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod model;
pub mod ontology;
pub mod pipeline;
pub mod synthetic;
pub mod template;
pub mod train;
pub mod vocab;

pub use checkpoint::Checkpoint;
pub use corpus::{ClozeInstance, EventMention, Span, Split};
pub use error::{Error, Result};
pub use eval::{evaluate_prf, EvalReport};
pub use ontology::{EventOntology, EventTypeDef};
pub use template::{InputSequence, QuestionTemplate};
pub use train::{Mode, TrainConfig};
pub use vocab::Vocabulary;
