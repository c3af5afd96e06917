mod common;

use sha2::{Digest, Sha256};

use common::{central_differences, fixture};
use l2a_core::model::{forward, EncoderParams};
use l2a_core::template::QuestionTemplate;
use l2a_core::train::{
    batch_loss, eae_loss, freeze_check, predict, Example, MlmLossForm, Mode, OptimizerKind,
    TrainConfig, Trainer,
};

fn hash_params(p: &EncoderParams) -> Vec<u8> {
    let mut h = Sha256::new();
    for (name, a) in p.named_arrays() {
        h.update(name.as_bytes());
        for x in a.iter() {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize().to_vec()
}

fn hash_rows(a: &ndarray::Array2<f64>) -> Vec<u8> {
    let mut h = Sha256::new();
    for x in a.iter() {
        h.update(x.to_le_bytes());
    }
    h.finalize().to_vec()
}

#[test]
fn pseudo_steps_leave_the_encoder_bytes_alone() {
    let f = fixture();
    let examples = f.examples(&QuestionTemplate::pseudo(8).unwrap());
    let batch: Vec<&Example> = examples.iter().collect();
    let params = f.params(1);
    let prompts = f.prompts(&params, 8, 1);
    let before = (hash_params(&params), hash_rows(&prompts.vectors));
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let cfg = TrainConfig {
            optimizer,
            ..TrainConfig::new(Mode::Pseudo)
        };
        let mut t = Trainer::new(params.clone(), Some(prompts.clone()), cfg).unwrap();
        for _ in 0..10 {
            t.step(&batch, &f.vocab).unwrap();
        }
        assert_eq!(hash_params(&t.params), before.0);
        assert_ne!(hash_rows(&t.prompts.as_ref().unwrap().vectors), before.1);
        assert!(freeze_check(&params, &t.params).unwrap());
    }
}

#[test]
fn base_steps_change_the_encoder() {
    let f = fixture();
    let examples =
        f.examples(&QuestionTemplate::manual("{arg} of {event_type} is {MASK}").unwrap());
    let batch: Vec<&Example> = examples.iter().collect();
    let params = f.params(2);
    let mut t = Trainer::new(params.clone(), None, TrainConfig::new(Mode::Base)).unwrap();
    t.step(&batch, &f.vocab).unwrap();
    assert!(!freeze_check(&params, &t.params).unwrap());

    let frozen = TrainConfig {
        freeze_encoder: Some(true),
        ..TrainConfig::new(Mode::Base)
    };
    let mut t = Trainer::new(params.clone(), None, frozen).unwrap();
    t.step(&batch, &f.vocab).unwrap();
    assert!(freeze_check(&params, &t.params).unwrap());
}

fn mean_eae(examples: &[Example], t: &Trainer) -> f64 {
    examples
        .iter()
        .map(|ex| {
            let dist = predict(ex, &t.params, t.prompts.as_ref()).unwrap();
            eae_loss(&dist, &ex.event_type.roles[ex.gold.unwrap()]).unwrap()
        })
        .sum::<f64>()
        / examples.len() as f64
}

#[test]
fn prompt_gradients_reduce_the_role_loss() {
    let f = fixture();
    let examples = f.examples(&QuestionTemplate::pseudo(8).unwrap());
    let batch: Vec<&Example> = examples.iter().collect();
    let params = f.params(3);
    let prompts = f.prompts(&params, 8, 3);
    let mut t = Trainer::new(params, Some(prompts), TrainConfig::new(Mode::Pseudo)).unwrap();
    let before = mean_eae(&examples, &t);
    for _ in 0..200 {
        t.step(&batch, &f.vocab).unwrap();
    }
    let after = mean_eae(&examples, &t);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn ce_form_gradients_match_finite_differences() {
    let f = fixture();
    let examples = f.examples(&QuestionTemplate::pseudo(4).unwrap());
    let batch: Vec<&Example> = examples.iter().collect();
    let params = f.params(4);
    let prompts = f.prompts(&params, 4, 4);
    let cfg = TrainConfig {
        mlm_loss_form: MlmLossForm::Ce,
        mask_rate: 0.5,
        ..TrainConfig::new(Mode::Pseudo)
    };
    let (_, g) = batch_loss(&batch, &params, Some(&prompts), &f.vocab, &cfg, 0, true).unwrap();
    let analytic: Vec<f64> = g.unwrap().prompts.unwrap().iter().copied().collect();
    let coords: Vec<usize> = (0..analytic.len()).collect();
    let d = params.config.d_model;
    let numeric = central_differences(&coords, 1e-5, |c, eps| {
        let mut p = prompts.clone();
        p.vectors[[c / d, c % d]] += eps;
        batch_loss(&batch, &params, Some(&p), &f.vocab, &cfg, 0, false)
            .unwrap()
            .0
            .l_total
    });
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!(
            (a - n).abs() <= 1e-4 * a.abs().max(n.abs()).max(1e-6),
            "{a} vs {n}"
        );
    }
}

#[test]
fn none_gold_contributes_no_role_loss() {
    let f = fixture();
    let mut examples = f.examples(&QuestionTemplate::pseudo(8).unwrap());
    for ex in &mut examples {
        ex.gold = None;
    }
    let batch: Vec<&Example> = examples.iter().collect();
    let params = f.params(5);
    let prompts = f.prompts(&params, 8, 5);
    let (loss, _) = batch_loss(
        &batch,
        &params,
        Some(&prompts),
        &f.vocab,
        &TrainConfig::new(Mode::Pseudo),
        0,
        false,
    )
    .unwrap();
    assert_eq!(loss.l_eae, 0.0);
}

#[test]
fn forward_rejects_ids_outside_the_vocabulary() {
    let f = fixture();
    let params = f.params(6);
    assert!(forward(&[1, f.vocab.len(), 2], &[], &params, None).is_err());
}
