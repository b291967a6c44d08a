use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use riskcp::classifier::{fit_logistic, TrainConfig};
use riskcp::conformal::{p_value, predict_batch};
use riskcp::setpredictors::{raps_predictor, RapsConfig, SetPredictor};
use riskcp_bench::fixture;

fn bench_p_value(c: &mut Criterion) {
    let f = fixture(400, 8);
    c.bench_function("p_value", |b| {
        b.iter(|| p_value(&f.table, black_box(1.7), 1, true).unwrap())
    });
}

fn bench_predict_batch(c: &mut Criterion) {
    let f = fixture(400, 8);
    c.bench_function("predict_batch_300", |b| {
        b.iter(|| predict_batch(&f.model, &f.table, black_box(&f.test), 0.1, false).unwrap())
    });
}

fn bench_fit(c: &mut Criterion) {
    let f = fixture(400, 8);
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("logistic_20_epochs", |b| {
        b.iter(|| fit_logistic(black_box(&f.train), &cfg).unwrap())
    });
    g.finish();
}

fn bench_raps(c: &mut Criterion) {
    let f = fixture(400, 8);
    let pred = raps_predictor(&f.model, &f.cal, 0.1, RapsConfig::default()).unwrap();
    c.bench_function("raps_predict_set", |b| {
        b.iter(|| {
            f.test
                .instances()
                .iter()
                .map(|x| pred.predict_set(black_box(x)).len())
                .sum::<usize>()
        })
    });
}

criterion_group!(
    benches,
    bench_p_value,
    bench_predict_batch,
    bench_fit,
    bench_raps
);
criterion_main!(benches);
