//! Toy masked-language-model encoder and its cloze heads.

pub mod encoder;
pub mod heads;
pub mod params;

pub use encoder::{backward, encode, forward, ForwardCache, HiddenStates};
pub use heads::{role_distribution, softmax, vocab_distribution, RoleDistribution};
pub use params::{EncoderParams, LayerParams, ModelConfig, PromptEmbeddings};
