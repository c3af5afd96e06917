//! End-to-end runs: MLM pretraining, cloze training, evaluation and the
//! few-shot sweep.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{build_instances, load_corpus, ClozeInstance, EventMention, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_prf, EvalReport};
use crate::fewshot::sample_few_shot;
use crate::model::{forward, EncoderParams, ModelConfig, PromptEmbeddings};
use crate::ontology::{load_ontology, EventOntology};
use crate::template::{QuestionTemplate, TemplateKind};
use crate::train::loss::{mlm_position_loss_and_grad, MlmLossForm};
use crate::train::masking::mask_positions;
use crate::train::trainer::masking_seed;
use crate::train::{
    build_examples, predict, project_pseudo_tokens, projected_prompts, Example, Gradients, Mode,
    OptimizerKind, ProjectedToken, TrainConfig, Trainer,
};
use crate::vocab::Vocabulary;

/// An ontology with its validated corpus and cloze instances.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ontology: EventOntology,
    pub mentions: Vec<EventMention>,
    pub instances: Vec<ClozeInstance>,
}

impl Dataset {
    pub fn new(ontology: EventOntology, mentions: Vec<EventMention>) -> Self {
        let instances = build_instances(&mentions);
        Self {
            ontology,
            mentions,
            instances,
        }
    }

    pub fn load(ontology_path: &Path, corpus_path: &Path) -> Result<Self> {
        let ontology = load_ontology(ontology_path)?;
        let mentions = load_corpus(corpus_path, &ontology)?;
        Ok(Self::new(ontology, mentions))
    }

    /// Instances whose mention belongs to `split`. Mentions without a split
    /// label count as train. `None` selects everything.
    pub fn instances_in(&self, split: Option<Split>) -> Vec<ClozeInstance> {
        self.instances
            .iter()
            .filter(|i| match split {
                None => true,
                Some(s) => self.mentions[i.mention].split.unwrap_or(Split::Train) == s,
            })
            .cloned()
            .collect()
    }

    pub fn mentions_in(&self, split: Split) -> Vec<EventMention> {
        self.mentions
            .iter()
            .filter(|m| m.split.unwrap_or(Split::Train) == split)
            .cloned()
            .collect()
    }

    /// Corpus words, ontology words and any literal template words.
    pub fn vocabulary(&self, templates: &[&QuestionTemplate]) -> Vocabulary {
        let mut words = self.ontology.words();
        for m in &self.mentions {
            words.extend(m.tokens.iter().cloned());
        }
        for t in templates {
            words.extend(t.words());
        }
        Vocabulary::from_words(words)
    }

    pub fn select(&self, ids: &[String]) -> Vec<ClozeInstance> {
        let index: BTreeMap<&str, &ClozeInstance> = self
            .instances
            .iter()
            .map(|i| (i.instance_id.as_str(), i))
            .collect();
        ids.iter()
            .filter_map(|id| index.get(id.as_str()).map(|i| (*i).clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 16,
            learning_rate: 0.01,
            mask_rate: 0.15,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Plain MLM pretraining on `[CLS] sentence [SEP] sentence [SEP]` pairs,
/// updating every encoder weight. Returns the pretrained checkpoint and the
/// per-step MLM loss.
pub fn run_pretrain(
    sentences: &[EventMention],
    vocab: &Vocabulary,
    model: ModelConfig,
    cfg: &PretrainConfig,
) -> Result<(Checkpoint, Vec<f64>)> {
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(0.0..1.0).contains(&cfg.mask_rate) || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "pretraining needs mask_rate in [0, 1) and a positive batch".into(),
        ));
    }
    let model = ModelConfig {
        vocab_size: vocab.len(),
        ..model
    };
    let params = EncoderParams::init(model, cfg.seed)?;
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|m| m.tokens.iter().map(|t| vocab.id_or_unk(t)).collect())
        .collect();

    // Reuse the trainer's optimizer through a base-mode trainer with no role loss.
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        mask_rate: cfg.mask_rate,
        seed: cfg.seed,
        mlm_loss_form: MlmLossForm::Ce,
        freeze_encoder: Some(false),
        optimizer: cfg.optimizer,
        ..TrainConfig::new(Mode::Base)
    };
    let mut trainer = Trainer::new(params, None, train_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps as u64 {
        let pairs: Vec<Vec<usize>> = (0..cfg.batch_size)
            .map(|_| {
                let a = &ids[rand::Rng::gen_range(&mut rng, 0..ids.len())];
                let b = &ids[rand::Rng::gen_range(&mut rng, 0..ids.len())];
                let mut seq = Vec::with_capacity(a.len() + b.len() + 3);
                seq.push(vocab.cls_id());
                seq.extend(a);
                seq.push(vocab.sep_id());
                seq.extend(b);
                seq.truncate(model.max_len - 1);
                seq.push(vocab.sep_id());
                seq
            })
            .collect();
        let params = &trainer.params;
        let scale = 1.0 / pairs.len() as f64;
        let results: Vec<(f64, Gradients)> = pairs
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let mut masked = seq.clone();
                let mut mrng = ChaCha8Rng::seed_from_u64(masking_seed(cfg.seed, step, i as u64));
                let plan =
                    mask_positions(&mut masked, 0..seq.len(), cfg.mask_rate, vocab, &mut mrng);
                mlm_only_loss(&masked, &plan.positions, &plan.original_ids, params, scale)
            })
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        let mut grads = Gradients::zeros(params, None);
        for (l, g) in &results {
            total += l;
            grads.encoder.scaled_add(1.0, &g.encoder);
        }
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                l_eae: 0.0,
                l_mlm: loss,
            });
        }
        trainer.apply_gradients(&grads);
        losses.push(loss);
    }
    Ok((
        Checkpoint {
            vocab: vocab.clone(),
            params: trainer.params,
            prompts: None,
            template: None,
            mode: None,
        },
        losses,
    ))
}

fn mlm_only_loss(
    token_ids: &[usize],
    positions: &[usize],
    targets: &[usize],
    params: &EncoderParams,
    scale: f64,
) -> Result<(f64, Gradients)> {
    let cache = forward(token_ids, &[], params, None)?;
    let hidden = cache.hidden();
    let mut grads = Gradients::zeros(params, None);
    let mut d_hidden = ndarray::Array2::zeros(hidden.raw_dim());
    let mut loss = 0.0;
    for (&pos, &target) in positions.iter().zip(targets) {
        let h = hidden.row(pos);
        let logits = params.token_embeddings.dot(&h);
        let (l, dz) =
            mlm_position_loss_and_grad(logits.as_slice().unwrap(), target, MlmLossForm::Ce);
        loss += l;
        let dz = ndarray::Array1::from(dz) * scale;
        let mut row = d_hidden.row_mut(pos);
        row += &params.token_embeddings.t().dot(&dz);
        for (mut e, &g) in grads
            .encoder
            .token_embeddings
            .rows_mut()
            .into_iter()
            .zip(dz.iter())
        {
            e.scaled_add(g, &h);
        }
    }
    crate::model::backward(&cache, &d_hidden, params, &mut grads.encoder, None);
    Ok((loss, grads))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub l_eae: f64,
    pub l_mlm: f64,
    pub l_total: f64,
    pub mode: Mode,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub initial: Checkpoint,
    pub log: Vec<StepLog>,
    pub projection: Option<Vec<ProjectedToken>>,
}

pub struct TrainRequest<'a> {
    pub dataset: &'a Dataset,
    pub train_instances: &'a [ClozeInstance],
    pub template: &'a QuestionTemplate,
    pub train: &'a TrainConfig,
    pub model: ModelConfig,
    /// Starting encoder (for example a pretrained one). Without it the
    /// encoder is initialized from `train.seed`.
    pub init: Option<&'a Checkpoint>,
}

pub fn check_mode(mode: Mode, template: &QuestionTemplate) -> Result<()> {
    match (mode, template.kind()) {
        (Mode::Base, TemplateKind::Manual) | (Mode::Pseudo, TemplateKind::Pseudo) => Ok(()),
        (m, k) => Err(Error::InvalidConfig(format!(
            "mode {m:?} needs a {} template, got {k:?}",
            if m == Mode::Base { "manual" } else { "pseudo" }
        ))),
    }
}

pub fn run_train(req: &TrainRequest<'_>) -> Result<TrainOutcome> {
    let cfg = req.train;
    cfg.validate()?;
    check_mode(cfg.mode, req.template)?;
    let (vocab, params) = match req.init {
        Some(ck) => (ck.vocab.clone(), ck.params.clone()),
        None => {
            let vocab = req.dataset.vocabulary(&[req.template]);
            let model = ModelConfig {
                vocab_size: vocab.len(),
                ..req.model
            };
            let params = EncoderParams::init(model, cfg.seed)?;
            (vocab, params)
        }
    };
    req.dataset.ontology.check_vocabulary(&vocab)?;
    let prompts = match cfg.mode {
        Mode::Pseudo => Some(PromptEmbeddings::init_from_vocab(
            req.template.pseudo_length(),
            &params,
            &vocab,
            cfg.seed ^ 0x5EED,
        )),
        Mode::Base => None,
    };
    let examples = build_examples(
        req.template,
        &req.dataset.ontology,
        &req.dataset.mentions,
        req.train_instances,
        &vocab,
        params.config.max_len,
    )?;
    if examples.is_empty() && cfg.steps > 0 {
        return Err(Error::EmptyCorpus);
    }

    let initial = Checkpoint {
        vocab: vocab.clone(),
        params: params.clone(),
        prompts: prompts.clone(),
        template: Some(req.template.clone()),
        mode: Some(cfg.mode),
    };
    let mut trainer = Trainer::new(params, prompts, cfg.clone())?;
    let mut log = Vec::with_capacity(cfg.steps);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cursor = order.len();
    for step in 0..cfg.steps {
        let mut batch: Vec<&Example> = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(examples.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&examples[order[cursor]]);
            cursor += 1;
        }
        let loss = trainer.step(&batch, &vocab)?;
        log.push(StepLog {
            step,
            l_eae: loss.l_eae,
            l_mlm: loss.l_mlm,
            l_total: loss.l_total,
            mode: cfg.mode,
            seed: cfg.seed,
        });
    }

    let projection = trainer
        .prompts
        .as_ref()
        .map(|p| project_pseudo_tokens(p, &trainer.params, &vocab));
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            vocab,
            params: trainer.params,
            prompts: trainer.prompts,
            template: Some(req.template.clone()),
            mode: Some(cfg.mode),
        },
        initial,
        log,
        projection,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: BTreeMap<String, Option<String>>,
}

/// Scores `instances` with argmax role predictions (ties by ontology order).
/// With `use_projection`, each prompt vector is replaced by the embedding of
/// its nearest vocabulary token first.
pub fn run_eval(
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    instances: &[ClozeInstance],
    template: Option<&QuestionTemplate>,
    use_projection: bool,
) -> Result<EvalOutcome> {
    let template = template.or(checkpoint.template.as_ref()).ok_or_else(|| {
        Error::InvalidConfig("no template given and none stored in the checkpoint".into())
    })?;
    dataset.ontology.check_vocabulary(&checkpoint.vocab)?;
    let prompts = match (template.kind(), &checkpoint.prompts) {
        (TemplateKind::Pseudo, Some(p)) if use_projection => Some(projected_prompts(
            &project_pseudo_tokens(p, &checkpoint.params, &checkpoint.vocab),
            &checkpoint.params,
        )),
        (TemplateKind::Pseudo, Some(p)) => Some(p.clone()),
        (TemplateKind::Pseudo, None) => {
            return Err(Error::InvalidConfig(
                "pseudo template but the checkpoint has no prompts".into(),
            ))
        }
        (TemplateKind::Manual, _) => None,
    };
    let examples = build_examples(
        template,
        &dataset.ontology,
        &dataset.mentions,
        instances,
        &checkpoint.vocab,
        checkpoint.params.config.max_len,
    )?;
    let predicted: Vec<Option<String>> = examples
        .par_iter()
        .map(|ex| {
            let dist = predict(ex, &checkpoint.params, prompts.as_ref())?;
            Ok(Some(dist.predicted_role().to_string()))
        })
        .collect::<Result<_>>()?;
    let predictions: BTreeMap<String, Option<String>> = instances
        .iter()
        .zip(predicted)
        .map(|(i, p)| (i.instance_id.clone(), p))
        .collect();
    let gold: BTreeMap<String, Option<String>> = instances
        .iter()
        .map(|i| (i.instance_id.clone(), i.gold_role.clone()))
        .collect();
    Ok(EvalOutcome {
        report: evaluate_prf(&predictions, &gold)?,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub n_seeds: usize,
    pub steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: vec![4, 8, 16, 32],
            n_seeds: 5,
            steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub seed: u64,
    pub f1: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub k: usize,
    pub median_f1: f64,
    pub min_f1: f64,
    pub max_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// For every `(k, seed)`: sample an episode from `pool`, train from the
/// initial encoder for `sweep.steps` steps and score it. Scoring uses
/// `held_out` when given, otherwise the episode's own test ids.
#[allow(clippy::too_many_arguments)]
pub fn run_fewshot_sweep(
    dataset: &Dataset,
    pool: &[ClozeInstance],
    held_out: Option<&[ClozeInstance]>,
    template: &QuestionTemplate,
    train: &TrainConfig,
    model: ModelConfig,
    init: Option<&Checkpoint>,
    sweep: &SweepConfig,
) -> Result<SweepResult> {
    if sweep.k_values.is_empty() || sweep.k_values.contains(&0) || sweep.n_seeds == 0 {
        return Err(Error::InvalidConfig(
            "k values must be positive and n_seeds at least 1".into(),
        ));
    }
    let runs: Vec<(usize, u64)> = sweep
        .k_values
        .iter()
        .flat_map(|&k| (0..sweep.n_seeds as u64).map(move |s| (k, s)))
        .collect();
    let rows: Vec<SweepRow> = runs
        .par_iter()
        .map(|&(k, seed)| {
            let episode = sample_few_shot(pool, k, seed)?;
            let train_set = dataset.select(&episode.train_ids);
            let test_set = match held_out {
                Some(h) => h.to_vec(),
                None => dataset.select(&episode.test_ids),
            };
            let cfg = TrainConfig {
                steps: sweep.steps,
                seed: train.seed.wrapping_add(seed),
                ..train.clone()
            };
            let outcome = run_train(&TrainRequest {
                dataset,
                train_instances: &train_set,
                template,
                train: &cfg,
                model,
                init,
            })?;
            let eval = run_eval(
                &outcome.checkpoint,
                dataset,
                &test_set,
                Some(template),
                false,
            )?;
            Ok(SweepRow {
                k,
                seed,
                f1: eval.report.f1,
                n_train: train_set.len(),
                n_test: test_set.len(),
            })
        })
        .collect::<Result<_>>()?;
    let summary = sweep
        .k_values
        .iter()
        .map(|&k| {
            let f1s: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.f1).collect();
            SweepSummary {
                k,
                median_f1: median(&f1s),
                min_f1: f1s.iter().copied().fold(f64::INFINITY, f64::min),
                max_f1: f1s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(SweepResult { rows, summary })
}
