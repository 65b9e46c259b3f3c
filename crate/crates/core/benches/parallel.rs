use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sfc_core::harness::{case_study_surrogate_config, generate_data, train_models, DataGenConfig};
use sfc_core::par::Execution;
use sfc_core::sim::{PlantParams, SimConfig};
use sfc_core::surrogate::{ModelKind, SurrogateConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn datagen(n_runs: usize, execution: Execution) -> DataGenConfig {
    DataGenConfig {
        n_samples: 40 * n_runs,
        n_runs,
        warmup: 500.0,
        seed: 1,
        execution,
        ..DataGenConfig::default()
    }
}

fn bench_generate(c: &mut Criterion) {
    let p = PlantParams::default();
    let sim = SimConfig::default();
    let mut g = c.benchmark_group("generate_data");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new(name, 8), &mode, |b, &mode| {
            b.iter(|| generate_data(&p, &sim, black_box(&datagen(8, mode))).unwrap())
        });
    }
    g.finish();
}

fn bench_train(c: &mut Criterion) {
    let data = generate_data(&PlantParams::default(), &SimConfig::default(), &datagen(4, Execution::Parallel)).unwrap();
    let mut g = c.benchmark_group("train_models");
    g.sample_size(10);
    for (name, mode) in MODES {
        let mut cfg: SurrogateConfig = case_study_surrogate_config();
        cfg.hidden = 10;
        cfg.quantile_hidden = 5;
        cfg.train.epochs = 20;
        cfg.bll.epochs = 20;
        cfg.execution = mode;
        g.bench_with_input(BenchmarkId::new(name, "all"), &cfg, |b, cfg| {
            b.iter(|| train_models(black_box(&data.trajectories), cfg, &ModelKind::ALL).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_generate, bench_train);
criterion_main!(benches);
