use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Standard deviation of the normal used for weight matrices.
    pub init_std: f64,
}

impl ModelConfig {
    /// The toy encoder: d = 16, two layers, two heads.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 64,
            max_len: 64,
            init_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size == 0 || self.max_len < 4 || self.d_ff == 0 {
            return Err(Error::InvalidConfig(
                "vocab_size, d_ff and max_len must be positive".into(),
            ));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::InvalidConfig("init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// One post-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub attn_norm_gamma: Array1<f64>,
    pub attn_norm_beta: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ffn_norm_gamma: Array1<f64>,
    pub ffn_norm_beta: Array1<f64>,
}

impl LayerParams {
    fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        Self {
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            attn_norm_gamma: Array1::zeros(d),
            attn_norm_beta: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
            ffn_norm_gamma: Array1::zeros(d),
            ffn_norm_beta: Array1::zeros(d),
        }
    }

    fn arrays(&self) -> [(&'static str, ArrayViewD<'_, f64>); 16] {
        [
            ("wq", self.wq.view().into_dyn()),
            ("bq", self.bq.view().into_dyn()),
            ("wk", self.wk.view().into_dyn()),
            ("bk", self.bk.view().into_dyn()),
            ("wv", self.wv.view().into_dyn()),
            ("bv", self.bv.view().into_dyn()),
            ("wo", self.wo.view().into_dyn()),
            ("bo", self.bo.view().into_dyn()),
            ("attn_norm_gamma", self.attn_norm_gamma.view().into_dyn()),
            ("attn_norm_beta", self.attn_norm_beta.view().into_dyn()),
            ("w1", self.w1.view().into_dyn()),
            ("b1", self.b1.view().into_dyn()),
            ("w2", self.w2.view().into_dyn()),
            ("b2", self.b2.view().into_dyn()),
            ("ffn_norm_gamma", self.ffn_norm_gamma.view().into_dyn()),
            ("ffn_norm_beta", self.ffn_norm_beta.view().into_dyn()),
        ]
    }

    fn arrays_mut(&mut self) -> [(&'static str, ArrayViewMutD<'_, f64>); 16] {
        [
            ("wq", self.wq.view_mut().into_dyn()),
            ("bq", self.bq.view_mut().into_dyn()),
            ("wk", self.wk.view_mut().into_dyn()),
            ("bk", self.bk.view_mut().into_dyn()),
            ("wv", self.wv.view_mut().into_dyn()),
            ("bv", self.bv.view_mut().into_dyn()),
            ("wo", self.wo.view_mut().into_dyn()),
            ("bo", self.bo.view_mut().into_dyn()),
            (
                "attn_norm_gamma",
                self.attn_norm_gamma.view_mut().into_dyn(),
            ),
            ("attn_norm_beta", self.attn_norm_beta.view_mut().into_dyn()),
            ("w1", self.w1.view_mut().into_dyn()),
            ("b1", self.b1.view_mut().into_dyn()),
            ("w2", self.w2.view_mut().into_dyn()),
            ("b2", self.b2.view_mut().into_dyn()),
            ("ffn_norm_gamma", self.ffn_norm_gamma.view_mut().into_dyn()),
            ("ffn_norm_beta", self.ffn_norm_beta.view_mut().into_dyn()),
        ]
    }
}

/// Encoder weights. The output projection is tied to `token_embeddings`, so
/// the logit of token `v` at a position is `token_embeddings[v] . h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: ModelConfig,
    pub token_embeddings: Array2<f64>,
    pub position_embeddings: Array2<f64>,
    pub layers: Vec<LayerParams>,
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl EncoderParams {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, std) = (config.d_model, config.d_ff, config.init_std);
        let token_embeddings = normal_matrix(&mut rng, config.vocab_size, d, std);
        let position_embeddings = normal_matrix(&mut rng, config.max_len, d, std);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                wq: normal_matrix(&mut rng, d, d, std),
                bq: Array1::zeros(d),
                wk: normal_matrix(&mut rng, d, d, std),
                bk: Array1::zeros(d),
                wv: normal_matrix(&mut rng, d, d, std),
                bv: Array1::zeros(d),
                wo: normal_matrix(&mut rng, d, d, std),
                bo: Array1::zeros(d),
                attn_norm_gamma: Array1::ones(d),
                attn_norm_beta: Array1::zeros(d),
                w1: normal_matrix(&mut rng, d, f, std),
                b1: Array1::zeros(f),
                w2: normal_matrix(&mut rng, f, d, std),
                b2: Array1::zeros(d),
                ffn_norm_gamma: Array1::ones(d),
                ffn_norm_beta: Array1::zeros(d),
            })
            .collect();
        Ok(Self {
            config,
            token_embeddings,
            position_embeddings,
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let c = self.config;
        Self {
            config: c,
            token_embeddings: Array2::zeros((c.vocab_size, c.d_model)),
            position_embeddings: Array2::zeros((c.max_len, c.d_model)),
            layers: (0..c.n_layers).map(|_| LayerParams::zeros(&c)).collect(),
        }
    }

    /// Every parameter array with a stable name, in a fixed order.
    pub fn named_arrays(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![
            (
                "token_embeddings".to_string(),
                self.token_embeddings.view().into_dyn(),
            ),
            (
                "position_embeddings".to_string(),
                self.position_embeddings.view().into_dyn(),
            ),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(
                layer
                    .arrays()
                    .into_iter()
                    .map(|(n, a)| (format!("layers.{i}.{n}"), a)),
            );
        }
        out
    }

    pub fn named_arrays_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![
            (
                "token_embeddings".to_string(),
                self.token_embeddings.view_mut().into_dyn(),
            ),
            (
                "position_embeddings".to_string(),
                self.position_embeddings.view_mut().into_dyn(),
            ),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(
                layer
                    .arrays_mut()
                    .into_iter()
                    .map(|(n, a)| (format!("layers.{i}.{n}"), a)),
            );
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_arrays().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_arrays()
            .iter()
            .all(|(_, a)| a.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, array by array.
    pub fn scaled_add(&mut self, scale: f64, other: &EncoderParams) {
        for ((_, mut a), (_, b)) in self
            .named_arrays_mut()
            .into_iter()
            .zip(other.named_arrays())
        {
            a.scaled_add(scale, &b);
        }
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.config.vocab_size {
            return Err(Error::ShapeMismatch(format!(
                "vocabulary has {} tokens but the encoder expects {}",
                vocab.len(),
                self.config.vocab_size
            )));
        }
        Ok(())
    }
}

/// Trainable vectors that replace the input embeddings at pseudo slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbeddings {
    pub vectors: Array2<f64>,
}

impl PromptEmbeddings {
    pub fn zeros(length: usize, d_model: usize) -> Self {
        Self {
            vectors: Array2::zeros((length, d_model)),
        }
    }

    /// Each vector starts as the input embedding of a random regular token.
    pub fn init_from_vocab(
        length: usize,
        params: &EncoderParams,
        vocab: &Vocabulary,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regular = vocab.regular_ids();
        let mut vectors = Array2::zeros((length, params.config.d_model));
        for mut row in vectors.rows_mut() {
            let id = if regular.is_empty() {
                vocab.pad_id()
            } else {
                rng.gen_range(regular.clone())
            };
            row.assign(&params.token_embeddings.row(id));
        }
        Self { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_finite() {
        let cfg = ModelConfig::toy(50);
        let a = EncoderParams::init(cfg, 3).unwrap();
        let b = EncoderParams::init(cfg, 3).unwrap();
        let c = EncoderParams::init(cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.is_finite());
        let names: Vec<String> = a.named_arrays().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 2 + 16 * cfg.n_layers);
        assert_eq!(names[2], "layers.0.wq");
    }

    #[test]
    fn bad_head_count() {
        let mut cfg = ModelConfig::toy(50);
        cfg.n_heads = 3;
        assert!(EncoderParams::init(cfg, 0).is_err());
    }

    #[test]
    fn prompts_start_on_vocabulary_rows() {
        let vocab = Vocabulary::from_words(["a", "b", "c"]);
        let params = EncoderParams::init(ModelConfig::toy(vocab.len()), 0).unwrap();
        let prompts = PromptEmbeddings::init_from_vocab(8, &params, &vocab, 1);
        for row in prompts.vectors.rows() {
            assert!(vocab
                .regular_ids()
                .any(|id| params.token_embeddings.row(id) == row));
        }
    }
}
