//! `l2a`: generate data, pretrain, train, evaluate, project and sweep.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use l2a_core::corpus::Split;
use l2a_core::model::ModelConfig;
use l2a_core::pipeline::{
    check_mode, run_eval, run_fewshot_sweep, run_pretrain, run_train, Dataset, PretrainConfig,
    SweepConfig, TrainRequest,
};
use l2a_core::synthetic::generate_synthetic_corpus;
use l2a_core::template::DEFAULT_PSEUDO_LENGTH;
use l2a_core::train::{project_with_metric, Metric, MlmLossForm, OptimizerKind, ProjectedToken};
use l2a_core::{Checkpoint, Mode, QuestionTemplate, TrainConfig};

#[derive(Parser)]
#[command(
    name = "l2a",
    version,
    about = "Event argument extraction as a cloze task over a toy masked LM"
)]
struct Cli {
    /// Directory for every file the command writes.
    #[arg(long, global = true, env = "L2A_OUTPUT_DIR", default_value = "l2a-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ontology.json and corpus.jsonl.
    Generate {
        #[arg(long, default_value_t = 6)]
        event_types: usize,
        #[arg(long, default_value_t = 3)]
        roles_per_type: usize,
        #[arg(long, default_value_t = 900)]
        sentences: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// MLM-pretrain an encoder on the train split; writes pretrained.json.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 4000)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Extra template file whose words join the vocabulary.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Train and write checkpoint.json, train_log.jsonl and (pseudo) projection.json.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        tpl: TemplateArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
    },
    /// Score a checkpoint; writes eval_report.json and predictions.json.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Replace learned prompts by their nearest vocabulary tokens first.
        #[arg(long)]
        projected: bool,
        /// Accepted for uniformity; evaluation is deterministic.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Nearest vocabulary token for each learned prompt; writes projection.json.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricArg::Cosine)]
        metric: MetricArg,
        /// Accepted for uniformity; projection is deterministic.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Few-shot sweep over k and seeds; writes sweep.json.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        tpl: TemplateArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![4, 8, 16, 32])]
        k: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        n_seeds: usize,
        /// Training steps per episode (overrides --steps).
        #[arg(long, default_value_t = 200)]
        episode_steps: usize,
        /// Split episodes are sampled from.
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        pool: SplitArg,
        /// Held-out split every episode is scored on; `none` scores each
        /// episode on its own leftover instances.
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        eval_split: SplitArg,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    ontology: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
struct TemplateArgs {
    /// Template JSON file; overrides --pattern and --pseudo-length.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Manual question pattern, e.g. "what is the role of {arg} in {event_type} ? {MASK}".
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, default_value_t = DEFAULT_PSEUDO_LENGTH)]
    pseudo_length: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Pseudo)]
    mode: ModeArg,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.15)]
    mask_rate: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Bce)]
    mlm_loss: LossArg,
    #[arg(long, value_enum, default_value_t = OptArg::Sgd)]
    optimizer: OptArg,
    /// Freeze the encoder (default: frozen in pseudo mode, trained in base mode).
    #[arg(long)]
    freeze_encoder: Option<bool>,
    /// Start from this checkpoint's encoder and vocabulary.
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Base,
    Pseudo,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
    All,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Cosine,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Bce,
    Ce,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Sgd,
    Adam,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Dev => Some(Split::Dev),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All | SplitArg::None => None,
        }
    }
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let mode = match self.mode {
            ModeArg::Base => Mode::Base,
            ModeArg::Pseudo => Mode::Pseudo,
        };
        let defaults = TrainConfig::new(mode);
        TrainConfig {
            learning_rate: self.lr.unwrap_or(defaults.learning_rate),
            steps: self.steps,
            batch_size: self.batch_size,
            mask_rate: self.mask_rate,
            seed: self.seed,
            mlm_loss_form: match self.mlm_loss {
                LossArg::Bce => MlmLossForm::Bce,
                LossArg::Ce => MlmLossForm::Ce,
            },
            freeze_encoder: self.freeze_encoder,
            optimizer: match self.optimizer {
                OptArg::Sgd => OptimizerKind::Sgd,
                OptArg::Adam => OptimizerKind::Adam,
            },
            ..defaults
        }
    }

    fn init(&self) -> l2a_core::Result<Option<Checkpoint>> {
        self.init_checkpoint
            .as_ref()
            .map(Checkpoint::load)
            .transpose()
    }
}

impl TemplateArgs {
    fn template(&self, mode: Mode) -> l2a_core::Result<QuestionTemplate> {
        if let Some(path) = &self.template {
            return QuestionTemplate::load(path);
        }
        match (mode, &self.pattern) {
            (_, Some(p)) => QuestionTemplate::manual(p),
            (Mode::Pseudo, None) => QuestionTemplate::pseudo(self.pseudo_length),
            (Mode::Base, None) => Err(l2a_core::Error::InvalidConfig(
                "base mode needs --pattern or --template".into(),
            )),
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn print_projection(projection: &[ProjectedToken]) {
    println!("{:>5}  {:<16} {:>10}", "slot", "token", "similarity");
    for p in projection {
        println!(
            "{:>5}  {:<16} {:>10.4}",
            format!("[u{}]", p.slot + 1),
            p.token,
            p.similarity
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = &cli.out_dir;
    match cli.command {
        Command::Generate {
            event_types,
            roles_per_type,
            sentences,
            seed,
        } => {
            let corpus = generate_synthetic_corpus(event_types, roles_per_type, sentences, seed)?;
            let o = write(out, "ontology.json", &corpus.ontology_json())?;
            let c = write(out, "corpus.jsonl", &corpus.corpus_jsonl())?;
            println!(
                "wrote {} and {} ({} sentences)",
                o.display(),
                c.display(),
                corpus.mentions.len()
            );
        }
        Command::Pretrain {
            data,
            steps,
            lr,
            batch_size,
            seed,
            template,
        } => {
            let ds = Dataset::load(&data.ontology, &data.corpus)?;
            let extra = template.map(QuestionTemplate::load).transpose()?;
            let vocab = ds.vocabulary(&extra.iter().collect::<Vec<_>>());
            let cfg = PretrainConfig {
                steps,
                learning_rate: lr,
                batch_size,
                seed,
                ..PretrainConfig::default()
            };
            let (ck, losses) = run_pretrain(
                &ds.mentions_in(Split::Train),
                &vocab,
                ModelConfig::toy(vocab.len()),
                &cfg,
            )?;
            let path = write(out, "pretrained.json", &ck.to_json())?;
            let log: String = losses
                .iter()
                .enumerate()
                .map(|(step, l)| format!("{}\n", json!({"step": step, "l_mlm": l, "seed": seed})))
                .collect();
            write(out, "pretrain_log.jsonl", &log)?;
            if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
                println!("mlm loss {first:.4} -> {last:.4}");
            }
            println!("wrote {}", path.display());
        }
        Command::Train {
            data,
            tpl,
            train,
            split,
        } => {
            let ds = Dataset::load(&data.ontology, &data.corpus)?;
            let cfg = train.config();
            let template = tpl.template(cfg.mode)?;
            check_mode(cfg.mode, &template)?;
            let init = train.init()?;
            let instances = ds.instances_in(split.split());
            let outcome = run_train(&TrainRequest {
                dataset: &ds,
                train_instances: &instances,
                template: &template,
                train: &cfg,
                model: ModelConfig::toy(0),
                init: init.as_ref(),
            })?;
            let ck = write(out, "checkpoint.json", &outcome.checkpoint.to_json())?;
            let log: String = outcome
                .log
                .iter()
                .map(|row| format!("{}\n", serde_json::to_string(row).expect("row serializes")))
                .collect();
            write(out, "train_log.jsonl", &log)?;
            if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
                println!(
                    "step {:>5}  l_eae {:.4}  l_mlm {:.4}  l_total {:.4}",
                    first.step, first.l_eae, first.l_mlm, first.l_total
                );
                println!(
                    "step {:>5}  l_eae {:.4}  l_mlm {:.4}  l_total {:.4}",
                    last.step, last.l_eae, last.l_mlm, last.l_total
                );
            }
            if let Some(projection) = &outcome.projection {
                write(out, "projection.json", &pretty(projection))?;
                print_projection(projection);
            }
            println!("wrote {}", ck.display());
        }
        Command::Eval {
            data,
            checkpoint,
            split,
            projected,
            seed: _,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ds = Dataset::load(&data.ontology, &data.corpus)?;
            let instances = ds.instances_in(split.split());
            let outcome = run_eval(&ck, &ds, &instances, None, projected)?;
            let r = &outcome.report;
            write(out, "eval_report.json", &pretty(r))?;
            write(out, "predictions.json", &pretty(&outcome.predictions))?;
            println!(
                "{:<20} {:>7} {:>9} {:>5}",
                "role", "correct", "predicted", "gold"
            );
            for (role, c) in &r.per_role {
                println!(
                    "{:<20} {:>7} {:>9} {:>5}",
                    role, c.correct, c.predicted, c.gold
                );
            }
            println!(
                "n={}  P {:.4}  R {:.4}  F1 {:.4}",
                r.n_instances, r.precision, r.recall, r.f1
            );
        }
        Command::Project {
            checkpoint,
            metric,
            seed: _,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let prompts = ck.prompts.as_ref().ok_or_else(|| {
                l2a_core::Error::InvalidConfig("checkpoint has no learned prompts".into())
            })?;
            let metric = match metric {
                MetricArg::Cosine => Metric::Cosine,
                MetricArg::L2 => Metric::L2,
            };
            let projection = project_with_metric(prompts, &ck.params, &ck.vocab, metric);
            write(out, "projection.json", &pretty(&projection))?;
            print_projection(&projection);
        }
        Command::Sweep {
            data,
            tpl,
            train,
            k,
            n_seeds,
            episode_steps,
            pool,
            eval_split,
        } => {
            let ds = Dataset::load(&data.ontology, &data.corpus)?;
            let cfg = train.config();
            let template = tpl.template(cfg.mode)?;
            let init = train.init()?;
            let sweep = SweepConfig {
                k_values: k,
                n_seeds,
                steps: episode_steps,
            };
            let pool = ds.instances_in(pool.split());
            let held_out = match eval_split {
                SplitArg::None => None,
                s => Some(ds.instances_in(s.split())),
            };
            let result = run_fewshot_sweep(
                &ds,
                &pool,
                held_out.as_deref(),
                &template,
                &cfg,
                ModelConfig::toy(0),
                init.as_ref(),
                &sweep,
            )?;
            write(out, "sweep.json", &pretty(&result))?;
            println!("{:>4} {:>9} {:>7} {:>7}", "k", "median", "min", "max");
            for s in &result.summary {
                println!(
                    "{:>4} {:>9.4} {:>7.4} {:>7.4}",
                    s.k, s.median_f1, s.min_f1, s.max_f1
                );
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<l2a_core::Error>() {
        Some(e) if !e.is_config_error() => 2,
        Some(_) => 1,
        // Failures writing outputs are runtime errors.
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
