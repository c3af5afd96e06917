//! Single-file JSON checkpoint: model config, vocabulary, template and every
//! named parameter array with its shape.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderParams, ModelConfig, PromptEmbeddings};
use crate::template::QuestionTemplate;
use crate::train::Mode;
use crate::vocab::Vocabulary;

const FORMAT: &str = "l2a-checkpoint/1";
const PROMPTS: &str = "prompts";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
    pub prompts: Option<PromptEmbeddings>,
    pub template: Option<QuestionTemplate>,
    pub mode: Option<Mode>,
}

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template: Option<QuestionTemplate>,
    vocab: Vocabulary,
    arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut arrays: Vec<NamedArray> = self
            .params
            .named_arrays()
            .into_iter()
            .map(|(name, a)| NamedArray {
                name,
                shape: a.shape().to_vec(),
                data: a.iter().copied().collect(),
            })
            .collect();
        if let Some(p) = &self.prompts {
            arrays.push(NamedArray {
                name: PROMPTS.into(),
                shape: p.vectors.shape().to_vec(),
                data: p.vectors.iter().copied().collect(),
            });
        }
        let file = CheckpointFile {
            format: FORMAT.into(),
            config: self.params.config,
            mode: self.mode,
            template: self.template.clone(),
            vocab: self.vocab.clone(),
            arrays,
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Json {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        if file.format != FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint format `{}`",
                file.format
            )));
        }
        file.config.validate()?;
        let mut params = EncoderParams::init(file.config, 0)?.zeros_like();
        let mut prompts = None;
        let mut filled = 0;
        {
            let mut slots = params.named_arrays_mut();
            for arr in file.arrays {
                if arr.shape.iter().product::<usize>() != arr.data.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "array `{}` data/shape mismatch",
                        arr.name
                    )));
                }
                if arr.name == PROMPTS {
                    let [rows, cols] = arr.shape[..] else {
                        return Err(Error::ShapeMismatch("prompts must be 2-D".into()));
                    };
                    let vectors = Array2::from_shape_vec((rows, cols), arr.data)
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
                    prompts = Some(PromptEmbeddings { vectors });
                    continue;
                }
                let (_, slot) =
                    slots
                        .iter_mut()
                        .find(|(n, _)| *n == arr.name)
                        .ok_or_else(|| {
                            Error::ShapeMismatch(format!("unexpected array `{}`", arr.name))
                        })?;
                if slot.shape() != &arr.shape[..] {
                    return Err(Error::ShapeMismatch(format!(
                        "array `{}` has shape {:?}, expected {:?}",
                        arr.name,
                        arr.shape,
                        slot.shape()
                    )));
                }
                for (dst, src) in slot.iter_mut().zip(arr.data) {
                    *dst = src;
                }
                filled += 1;
            }
            if filled != slots.len() {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint has {filled} of {} encoder arrays",
                    slots.len()
                )));
            }
        }
        params.check_vocab(&file.vocab)?;
        if let Some(p) = &prompts {
            if p.vectors.ncols() != file.config.d_model {
                return Err(Error::ShapeMismatch(
                    "prompt width differs from d_model".into(),
                ));
            }
        }
        Ok(Self {
            vocab: file.vocab,
            params,
            prompts,
            template: file.template,
            mode: file.mode,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::CheckpointMissing(path.to_path_buf()));
        }
        Self::from_json(&crate::error::read_file(path)?)
    }
}
