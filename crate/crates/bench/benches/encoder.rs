use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use l2a_bench::workload;
use l2a_core::model::forward;
use l2a_core::train::{batch_loss, project_pseudo_tokens, Mode, TrainConfig, Trainer};

fn bench_encoder(c: &mut Criterion) {
    let w = workload(100, 7);
    let ex = &w.examples[0];

    c.bench_function("forward", |b| {
        b.iter(|| {
            forward(
                black_box(&ex.seq.token_ids),
                &ex.seq.pseudo_slots,
                &w.params,
                Some(&w.prompts),
            )
            .unwrap()
        })
    });

    let batch: Vec<_> = w.examples.iter().take(16).collect();
    let cfg = TrainConfig::new(Mode::Pseudo);
    c.bench_function("batch_loss_16", |b| {
        b.iter(|| batch_loss(&batch, &w.params, Some(&w.prompts), &w.vocab, &cfg, 0, true).unwrap())
    });

    c.bench_function("train_step_16", |b| {
        b.iter_batched(
            || Trainer::new(w.params.clone(), Some(w.prompts.clone()), cfg.clone()).unwrap(),
            |mut t| t.step(&batch, &w.vocab).unwrap(),
            BatchSize::SmallInput,
        )
    });

    c.bench_function("project_8", |b| {
        b.iter(|| project_pseudo_tokens(&w.prompts, &w.params, &w.vocab))
    });
}

criterion_group!(benches, bench_encoder);
criterion_main!(benches);
