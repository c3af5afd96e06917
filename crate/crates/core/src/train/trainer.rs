//! Joint role + MLM objective, batched gradients and parameter updates.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{
    eae_loss_and_grad, mlm_position_loss_and_grad, total_loss, LossBreakdown, MlmLossForm,
};
use super::masking::{apply_random_masking, MaskingPlan};
use crate::corpus::{ClozeInstance, EventMention};
use crate::error::{Error, Result};
use crate::model::heads::{role_distribution_at, verbalizer_ids, RoleDistribution};
use crate::model::{backward, forward, EncoderParams, PromptEmbeddings};
use crate::ontology::{EventOntology, EventTypeDef};
use crate::template::{encode_instance, InputSequence, QuestionTemplate};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Manual question template; encoder weights trainable.
    Base,
    /// Learned pseudo-question prompts; encoder frozen by default.
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub mask_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub mlm_loss_form: MlmLossForm,
    /// `None` means frozen in pseudo mode and trainable in base mode.
    #[serde(default)]
    pub freeze_encoder: Option<bool>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl TrainConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            learning_rate: 0.3,
            steps: 500,
            batch_size: 16,
            mask_rate: 0.15,
            seed: 0,
            mlm_loss_form: MlmLossForm::Bce,
            freeze_encoder: None,
            optimizer: OptimizerKind::Sgd,
        }
    }

    pub fn encoder_frozen(&self) -> bool {
        self.freeze_encoder.unwrap_or(self.mode == Mode::Pseudo)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_rate) {
            return Err(Error::InvalidConfig(format!(
                "mask_rate must be in [0, 1), got {}",
                self.mask_rate
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be a non-negative finite number, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// A cloze instance ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: InputSequence,
    pub event_type: EventTypeDef,
    pub verbalizer_ids: Vec<usize>,
    /// Index of the gold role in `event_type.roles`; `None` for NONE candidates.
    pub gold: Option<usize>,
}

pub fn build_examples(
    template: &QuestionTemplate,
    ontology: &EventOntology,
    mentions: &[EventMention],
    instances: &[ClozeInstance],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<Example>> {
    instances
        .iter()
        .map(|inst| {
            let mention = mentions.get(inst.mention).ok_or(Error::IndexOutOfBounds {
                index: inst.mention,
                len: mentions.len(),
            })?;
            let et = ontology.require(&inst.event_type)?;
            let gold = match &inst.gold_role {
                Some(role) => Some(
                    et.role_index(role)
                        .ok_or_else(|| Error::GoldRoleMissing(role.clone()))?,
                ),
                None => None,
            };
            Ok(Example {
                seq: encode_instance(template, mention, inst, vocab, max_len)?,
                verbalizer_ids: verbalizer_ids(et, vocab)?,
                event_type: et.clone(),
                gold,
            })
        })
        .collect()
}

/// Gradients for one forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: EncoderParams,
    pub prompts: Option<Array2<f64>>,
}

impl Gradients {
    pub fn zeros(params: &EncoderParams, prompts: Option<&PromptEmbeddings>) -> Self {
        Self {
            encoder: params.zeros_like(),
            prompts: prompts.map(|p| Array2::zeros(p.vectors.raw_dim())),
        }
    }

    fn add(&mut self, other: &Gradients) {
        self.encoder.scaled_add(1.0, &other.encoder);
        if let (Some(a), Some(b)) = (self.prompts.as_mut(), other.prompts.as_ref()) {
            *a += b;
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the masking draw for example `index` of step `step`.
pub fn masking_seed(seed: u64, step: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(step.wrapping_mul(0x1_0000_0001) ^ splitmix64(index)))
}

/// Role distribution at the cloze mask for one example.
pub fn predict(
    example: &Example,
    params: &EncoderParams,
    prompts: Option<&PromptEmbeddings>,
) -> Result<RoleDistribution> {
    let cache = forward(
        &example.seq.token_ids,
        &example.seq.pseudo_slots,
        params,
        prompts,
    )?;
    Ok(role_distribution_at(
        cache.hidden().row(example.seq.role_mask_index),
        &example.event_type,
        example.verbalizer_ids.clone(),
        params,
    ))
}

/// Losses of one masked example; accumulates `scale * gradient` when `grads`
/// is given.
#[allow(clippy::too_many_arguments)]
pub fn example_loss(
    example: &Example,
    masked: &InputSequence,
    plan: &MaskingPlan,
    params: &EncoderParams,
    prompts: Option<&PromptEmbeddings>,
    form: MlmLossForm,
    scale: f64,
    grads: Option<&mut Gradients>,
) -> Result<(f64, f64)> {
    let cache = forward(&masked.token_ids, &masked.pseudo_slots, params, prompts)?;
    let hidden = cache.hidden();
    let d = params.config.d_model;
    let mut d_hidden = Array2::zeros(hidden.raw_dim());
    let mut d_embed = Array2::<f64>::zeros(params.token_embeddings.raw_dim());
    let want_grads = grads.is_some();

    let mut l_eae = 0.0;
    if let Some(gold) = example.gold {
        let mask_pos = masked.role_mask_index;
        let h = hidden.row(mask_pos);
        let dist = role_distribution_at(
            h,
            &example.event_type,
            example.verbalizer_ids.clone(),
            params,
        );
        let (loss, dlogits) = eae_loss_and_grad(&dist, gold);
        l_eae = loss;
        if want_grads {
            let mut dh = Array1::zeros(d);
            for (&id, &g) in example.verbalizer_ids.iter().zip(&dlogits) {
                dh.scaled_add(scale * g, &params.token_embeddings.row(id));
                d_embed.row_mut(id).scaled_add(scale * g, &h);
            }
            let mut row = d_hidden.row_mut(mask_pos);
            row += &dh;
        }
    }

    let mut l_mlm = 0.0;
    for (&pos, &target) in plan.positions.iter().zip(&plan.original_ids) {
        let h = hidden.row(pos);
        let logits = params.token_embeddings.dot(&h);
        let (loss, dlogits) = mlm_position_loss_and_grad(logits.as_slice().unwrap(), target, form);
        l_mlm += loss;
        if want_grads {
            let dlogits = Array1::from(dlogits) * scale;
            let mut row = d_hidden.row_mut(pos);
            row += &params.token_embeddings.t().dot(&dlogits);
            for (mut erow, &g) in d_embed.rows_mut().into_iter().zip(dlogits.iter()) {
                erow.scaled_add(g, &h);
            }
        }
    }

    if let Some(grads) = grads {
        grads.encoder.token_embeddings += &d_embed;
        backward(
            &cache,
            &d_hidden,
            params,
            &mut grads.encoder,
            grads.prompts.as_mut(),
        );
    }
    Ok((l_eae, l_mlm))
}

/// Batch-averaged loss at `step`, with gradients when `with_grads` is set.
/// Masking depends only on `(cfg.seed, step, index)`, so repeated calls with
/// different parameters see identical masks.
pub fn batch_loss(
    batch: &[&Example],
    params: &EncoderParams,
    prompts: Option<&PromptEmbeddings>,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    step: u64,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Gradients>)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let per_example: Vec<Result<(f64, f64, Option<Gradients>)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let (masked, plan) = apply_random_masking(
                &ex.seq,
                cfg.mask_rate,
                vocab,
                masking_seed(cfg.seed, step, i as u64),
            );
            let mut grads = with_grads.then(|| Gradients::zeros(params, prompts));
            let (e, m) = example_loss(
                ex,
                &masked,
                &plan,
                params,
                prompts,
                cfg.mlm_loss_form,
                scale,
                grads.as_mut(),
            )?;
            Ok((e, m, grads))
        })
        .collect();

    let mut l_eae = 0.0;
    let mut l_mlm = 0.0;
    let mut total_grads: Option<Gradients> = None;
    for r in per_example {
        let (e, m, g) = r?;
        l_eae += e;
        l_mlm += m;
        if let Some(g) = g {
            match total_grads.as_mut() {
                Some(t) => t.add(&g),
                None => total_grads = Some(g),
            }
        }
    }
    let breakdown = total_loss(l_eae * scale, l_mlm * scale)?;
    Ok((breakdown, total_grads))
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, t: i32) {
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..param.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
    }
}

/// Owns the parameters being trained and applies one update per step.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: EncoderParams,
    pub prompts: Option<PromptEmbeddings>,
    pub cfg: TrainConfig,
    adam: Option<AdamState>,
    step: u64,
}

impl Trainer {
    pub fn new(
        params: EncoderParams,
        prompts: Option<PromptEmbeddings>,
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        match (cfg.mode, &prompts) {
            (Mode::Pseudo, None) => {
                return Err(Error::InvalidConfig(
                    "pseudo mode needs prompt embeddings".into(),
                ))
            }
            (Mode::Base, Some(_)) => {
                return Err(Error::InvalidConfig(
                    "base mode has no prompt embeddings".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            params,
            prompts,
            cfg,
            adam: None,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One gradient step on `batch`. On a non-finite loss nothing is updated.
    pub fn step(&mut self, batch: &[&Example], vocab: &Vocabulary) -> Result<LossBreakdown> {
        let (loss, grads) = batch_loss(
            batch,
            &self.params,
            self.prompts.as_ref(),
            vocab,
            &self.cfg,
            self.step,
            true,
        )?;
        let grads = grads.expect("gradients requested");
        self.apply_gradients(&grads);
        Ok(loss)
    }

    /// Applies precomputed gradients with the configured optimizer, honoring
    /// the freeze setting.
    pub fn apply_gradients(&mut self, grads: &Gradients) {
        self.step += 1;
        let lr = self.cfg.learning_rate;
        let train_encoder = !self.cfg.encoder_frozen();
        match self.cfg.optimizer {
            OptimizerKind::Sgd => {
                if train_encoder {
                    self.params.scaled_add(-lr, &grads.encoder);
                }
                if let (Some(p), Some(g)) = (self.prompts.as_mut(), grads.prompts.as_ref()) {
                    p.vectors.scaled_add(-lr, g);
                }
            }
            OptimizerKind::Adam => {
                let state = self.adam.get_or_insert_with(|| AdamState {
                    m: Gradients::zeros(&self.params, self.prompts.as_ref()),
                    v: Gradients::zeros(&self.params, self.prompts.as_ref()),
                    t: 0,
                });
                state.t += 1;
                let t = state.t;
                if train_encoder {
                    let params = self.params.named_arrays_mut();
                    let g = grads.encoder.named_arrays();
                    let m = state.m.encoder.named_arrays_mut();
                    let v = state.v.encoder.named_arrays_mut();
                    for (((mut p, g), mut m), mut v) in params
                        .into_iter()
                        .map(|(_, a)| a)
                        .zip(g.into_iter().map(|(_, a)| a))
                        .zip(m.into_iter().map(|(_, a)| a))
                        .zip(v.into_iter().map(|(_, a)| a))
                    {
                        adam_update(
                            p.as_slice_mut().unwrap(),
                            g.as_slice().unwrap(),
                            m.as_slice_mut().unwrap(),
                            v.as_slice_mut().unwrap(),
                            lr,
                            t,
                        );
                    }
                }
                if let (Some(p), Some(g), Some(m), Some(v)) = (
                    self.prompts.as_mut(),
                    grads.prompts.as_ref(),
                    state.m.prompts.as_mut(),
                    state.v.prompts.as_mut(),
                ) {
                    adam_update(
                        p.vectors.as_slice_mut().unwrap(),
                        g.as_slice().unwrap(),
                        m.as_slice_mut().unwrap(),
                        v.as_slice_mut().unwrap(),
                        lr,
                        t,
                    );
                }
            }
        }
    }
}
