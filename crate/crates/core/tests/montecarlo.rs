//! Statistical guarantees checked by simulation with fixed seeds.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use riskcp::classifier::{fit_logistic, TrainConfig};
use riskcp::conformal::calibrate;
use riskcp::data::{split, synth_benchmark, SplitSpec};
use riskcp::genmodel::{gan_fit, GanTrainConfig};
use riskcp::metrics::{
    alpha_sweep, coverage_guarantee_check, coverage_guarantee_check_with, standard_alphas,
    CoverageCheckConfig,
};
use riskcp::setpredictors::{
    naive_predictor, raps_predictor, topk_predictor, RapsConfig, SetPredictor,
};
use riskcp::{Dataset, Instance, LabelSet, Nonconformity};

#[test]
fn marginal_coverage_holds() {
    for alpha in [0.05, 0.1, 0.2] {
        let r = coverage_guarantee_check_with(&CoverageCheckConfig::new(30, 500, 1000, alpha, 0))
            .unwrap();
        assert!(r.pass, "α={alpha}: coverage {} < {}", r.coverage, r.bound);
        assert_eq!(r.n_evaluated, 30 * 1000);
    }
}

#[test]
fn extreme_alphas() {
    let (cov, pass) = coverage_guarantee_check(30, 500, 1000, 0.5, 0).unwrap();
    assert!(pass, "{cov}");
    let (cov, _) = coverage_guarantee_check(5, 300, 500, 1e-9, 1).unwrap();
    assert_eq!(cov, 1.0);
}

#[test]
fn class_conditional_coverage_under_imbalance() {
    let alpha = 0.1;
    let cfg = CoverageCheckConfig {
        class_weights: vec![10.0, 1.0, 2.0],
        ..CoverageCheckConfig::new(30, 500, 1000, alpha, 3)
    };
    let r = coverage_guarantee_check_with(&cfg).unwrap();
    for (k, c) in r.class_coverage.iter().enumerate() {
        assert!(*c >= 1.0 - alpha - 0.03, "class {k}: {c}");
    }
}

/// Benchmark split shared by the sweep and comparison checks: 2000
/// calibration rows per class keep the sampling spread of one run near 0.007.
fn benchmark() -> (Dataset, Dataset, Dataset) {
    let ds = synth_benchmark(&[8000, 8000, 8000], 4, 1.5, 21).unwrap();
    split(&ds, &SplitSpec::standard(21)).unwrap()
}

#[test]
fn sweep_error_tracks_alpha() {
    let (tr, ca, te) = benchmark();
    let m = fit_logistic(
        &tr,
        &TrainConfig {
            epochs: 100,
            ..Default::default()
        },
    )
    .unwrap();
    let t = calibrate(&m, &ca, Nonconformity::InverseProbability).unwrap();
    let rows = alpha_sweep(&m, &t, &te, &standard_alphas(), true).unwrap();
    for r in &rows {
        assert!(
            (r.mean_err - r.sig).abs() <= 0.03,
            "α={}: mean_err {}",
            r.sig,
            r.mean_err
        );
    }
    assert!(rows.windows(2).all(|w| w[1].avg_c <= w[0].avg_c));
}

#[test]
fn comparison_predictors_cover() {
    let (tr, ca, te) = benchmark();
    let m = fit_logistic(
        &tr,
        &TrainConfig {
            epochs: 100,
            ..Default::default()
        },
    )
    .unwrap();
    for alpha in [0.05, 0.5] {
        let preds: Vec<Box<dyn SetPredictor + '_>> = vec![
            Box::new(naive_predictor(&m, &ca, alpha).unwrap()),
            Box::new(topk_predictor(&m, &ca, alpha).unwrap()),
            Box::new(raps_predictor(&m, &ca, alpha, RapsConfig::default()).unwrap()),
        ];
        for p in &preds {
            let hits = te
                .iter()
                .filter(|(x, y)| p.predict_set(x).contains(y))
                .count();
            let cov = hits as f64 / te.len() as f64;
            assert!(
                cov >= 1.0 - alpha - 0.03,
                "{} α={alpha}: {cov}",
                p.method().name()
            );
        }
    }
}

fn gaussian(n: usize, seed: u64) -> Dataset {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let inst = (0..n)
        .map(|i| {
            Instance::new(
                format!("r{i}"),
                vec![g.sample(&mut rng), 2.0 * g.sample(&mut rng)],
            )
        })
        .collect();
    Dataset::new(
        LabelSet::new(["real", "other"]).unwrap(),
        vec!["a".into(), "b".into()],
        inst,
        vec![0; n],
    )
    .unwrap()
}

#[test]
fn gan_interval_covers_fresh_real_scores() {
    let alpha = 0.1;
    let per_seed: Vec<(usize, usize)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = GanTrainConfig {
                members: 3,
                epochs: 60,
                seed,
                ..Default::default()
            };
            let ens = gan_fit(&gaussian(400, seed), &cfg).unwrap();
            let (lo, hi) = ens.interval();
            let fresh = gaussian(500, 10_000 + seed);
            let inside = fresh
                .instances()
                .iter()
                .filter(|x| (lo..=hi).contains(&ens.score(&x.features)))
                .count();
            (inside, fresh.len())
        })
        .collect();
    let inside: usize = per_seed.iter().map(|p| p.0).sum();
    let n: usize = per_seed.iter().map(|p| p.1).sum();
    let cov = inside as f64 / n as f64;
    assert!(cov >= 1.0 - alpha - 0.05, "coverage {cov}");
}
