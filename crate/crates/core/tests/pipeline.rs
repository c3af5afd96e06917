use std::collections::BTreeMap;

use l2a_core::corpus::Split;
use l2a_core::model::{EncoderParams, ModelConfig};
use l2a_core::pipeline::{
    run_eval, run_fewshot_sweep, run_train, Dataset, SweepConfig, TrainRequest,
};
use l2a_core::synthetic::generate_synthetic_corpus;
use l2a_core::train::{freeze_check, Mode, TrainConfig};
use l2a_core::{Checkpoint, Error, QuestionTemplate};

fn dataset(n: usize, seed: u64) -> Dataset {
    let c = generate_synthetic_corpus(6, 3, n, seed).unwrap();
    Dataset::new(c.ontology, c.mentions)
}

fn train(
    ds: &Dataset,
    template: &QuestionTemplate,
    cfg: &TrainConfig,
) -> l2a_core::pipeline::TrainOutcome {
    let instances = ds.instances_in(Some(Split::Train));
    run_train(&TrainRequest {
        dataset: ds,
        train_instances: &instances,
        template,
        train: cfg,
        model: ModelConfig::toy(0),
        init: None,
    })
    .unwrap()
}

#[test]
fn pseudo_run_logs_every_step_and_lowers_the_loss() {
    let ds = dataset(900, 42);
    let cfg = TrainConfig {
        seed: 42,
        ..TrainConfig::new(Mode::Pseudo)
    };
    let out = train(&ds, &QuestionTemplate::pseudo(8).unwrap(), &cfg);
    assert_eq!(out.log.len(), 500);
    assert!(out
        .log
        .iter()
        .enumerate()
        .all(|(i, r)| r.step == i && r.mode == Mode::Pseudo && r.seed == 42));
    let first = &out.log[0];
    let last = &out.log[499];
    assert!(
        last.l_total < first.l_total,
        "{} -> {}",
        first.l_total,
        last.l_total
    );
    assert!(freeze_check(&out.initial.params, &out.checkpoint.params).unwrap());
    assert_eq!(out.projection.as_ref().unwrap().len(), 8);
}

#[test]
fn zero_steps_returns_the_initialization() {
    let ds = dataset(50, 1);
    let cfg = TrainConfig {
        steps: 0,
        ..TrainConfig::new(Mode::Pseudo)
    };
    let out = train(&ds, &QuestionTemplate::pseudo(4).unwrap(), &cfg);
    assert!(out.log.is_empty());
    assert_eq!(out.checkpoint, out.initial);
}

#[test]
fn base_mode_trains_the_encoder() {
    let ds = dataset(50, 2);
    let cfg = TrainConfig {
        steps: 5,
        ..TrainConfig::new(Mode::Base)
    };
    let out = train(
        &ds,
        &QuestionTemplate::manual("{event_type} {arg} {MASK}").unwrap(),
        &cfg,
    );
    assert!(!freeze_check(&out.initial.params, &out.checkpoint.params).unwrap());
    assert!(out.checkpoint.prompts.is_none() && out.projection.is_none());
}

#[test]
fn mode_must_match_template() {
    let ds = dataset(20, 3);
    let instances = ds.instances_in(None);
    let err = run_train(&TrainRequest {
        dataset: &ds,
        train_instances: &instances,
        template: &QuestionTemplate::pseudo(8).unwrap(),
        train: &TrainConfig::new(Mode::Base),
        model: ModelConfig::toy(0),
        init: None,
    })
    .unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
}

#[test]
fn untrained_checkpoints_score_near_chance() {
    let ds = dataset(900, 42);
    let template = QuestionTemplate::pseudo(8).unwrap();
    let test = ds.instances_in(Some(Split::Test));
    for seed in 0..5 {
        let cfg = TrainConfig {
            steps: 0,
            seed,
            ..TrainConfig::new(Mode::Pseudo)
        };
        let ck = train(&ds, &template, &cfg).checkpoint;
        let f1 = run_eval(&ck, &ds, &test, None, false).unwrap().report.f1;
        assert!((f1 - 1.0 / 3.0).abs() <= 0.1, "seed {seed}: F1 {f1}");
    }
}

#[test]
fn empty_split_gives_an_empty_report() {
    let ds = dataset(5, 4);
    assert!(ds.instances_in(Some(Split::Test)).is_empty());
    let cfg = TrainConfig {
        steps: 0,
        ..TrainConfig::new(Mode::Pseudo)
    };
    let ck = train(&ds, &QuestionTemplate::pseudo(8).unwrap(), &cfg).checkpoint;
    let r = run_eval(&ck, &ds, &[], None, false).unwrap().report;
    assert_eq!(r.n_instances, 0);
    assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
}

#[test]
fn eval_is_deterministic_and_survives_a_checkpoint_roundtrip() {
    let ds = dataset(100, 5);
    let cfg = TrainConfig {
        steps: 20,
        ..TrainConfig::new(Mode::Pseudo)
    };
    let out = train(&ds, &QuestionTemplate::pseudo(8).unwrap(), &cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    out.checkpoint.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, out.checkpoint);
    let all = ds.instances_in(None);
    let a = run_eval(&out.checkpoint, &ds, &all, None, false).unwrap();
    let b = run_eval(&back, &ds, &all, None, false).unwrap();
    assert_eq!(a, b);
    let projected = run_eval(&back, &ds, &all, None, true).unwrap();
    assert_eq!(projected.predictions.len(), all.len());
}

#[test]
fn minimal_sweep_and_determinism() {
    let ds = dataset(60, 6);
    let pool = ds.instances_in(Some(Split::Train));
    let cfg = TrainConfig::new(Mode::Pseudo);
    let sweep = SweepConfig {
        k_values: vec![4],
        n_seeds: 1,
        steps: 5,
    };
    let template = QuestionTemplate::pseudo(4).unwrap();
    let run = || {
        run_fewshot_sweep(
            &ds,
            &pool,
            None,
            &template,
            &cfg,
            ModelConfig::toy(0),
            None,
            &sweep,
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a.rows.len(), 1);
    assert_eq!(a.summary.len(), 1);
    assert_eq!(a, run());
    let bad = SweepConfig {
        k_values: vec![0],
        ..sweep
    };
    assert!(run_fewshot_sweep(
        &ds,
        &pool,
        None,
        &template,
        &cfg,
        ModelConfig::toy(0),
        None,
        &bad
    )
    .is_err());
}

#[test]
fn every_role_is_frequent_in_the_generated_train_split() {
    let c = generate_synthetic_corpus(6, 3, 900, 42).unwrap();
    // Independent scan of the emitted JSONL.
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in c.corpus_jsonl().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["split"] != "train" {
            continue;
        }
        for arg in v["arguments"].as_array().unwrap() {
            *counts
                .entry(arg["role"].as_str().unwrap().to_string())
                .or_default() += 1;
        }
    }
    let roles: Vec<&String> = c
        .ontology
        .event_types()
        .iter()
        .flat_map(|e| &e.roles)
        .collect();
    assert_eq!(roles.len(), 18);
    for role in roles {
        assert!(
            counts.get(role).copied().unwrap_or(0) >= 10,
            "{role}: {:?}",
            counts.get(role)
        );
    }
}

#[test]
fn pretrained_init_keeps_its_vocabulary() {
    let ds = dataset(40, 7);
    let template = QuestionTemplate::pseudo(8).unwrap();
    let vocab = ds.vocabulary(&[&template]);
    let init = Checkpoint {
        params: EncoderParams::init(ModelConfig::toy(vocab.len()), 1).unwrap(),
        vocab,
        prompts: None,
        template: None,
        mode: None,
    };
    let instances = ds.instances_in(None);
    let out = run_train(&TrainRequest {
        dataset: &ds,
        train_instances: &instances,
        template: &template,
        train: &TrainConfig {
            steps: 0,
            ..TrainConfig::new(Mode::Pseudo)
        },
        model: ModelConfig::toy(0),
        init: Some(&init),
    })
    .unwrap();
    assert_eq!(out.checkpoint.vocab, init.vocab);
    assert_eq!(out.checkpoint.params, init.params);
}
