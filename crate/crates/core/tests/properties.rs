//! Invariants checked over generated inputs.

mod common;

use common::{brute_p_value, order_statistic, TableModel};
use proptest::prelude::*;
use riskcp::classifier::{fit_bagged, fit_knn, fit_logistic, is_valid_distribution, TrainConfig};
use riskcp::conformal::{
    calibrate, p_value, predict, predict_batch, record_from_pvalues, CalibrationTable,
};
use riskcp::data::{read_csv, split, synth_benchmark, write_csv, SplitSpec};
use riskcp::metrics::{alpha_sweep, ranking, set_confusion, standard_alphas};
use riskcp::setpredictors::{raps_predictor, RapsConfig, SetPredictor};
use riskcp::{Dataset, Instance, LabelSet, Nonconformity, ScoreModel};

fn labels(k: usize) -> LabelSet {
    LabelSet::new((0..k).map(|j| format!("c{j}"))).unwrap()
}

/// Scores on a coarse grid so that ties with the test score are common.
fn grid_scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..=20).prop_map(|v| f64::from(v) / 20.0), 1..=max)
}

fn pvec(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(|k| prop::collection::vec(0.0f64..=1.0, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn p_values_match_recount(
        a in grid_scores(20),
        b in grid_scores(20),
        s in (0u32..=21).prop_map(|v| f64::from(v) / 20.0),
    ) {
        let t = CalibrationTable::from_scores(labels(2), Nonconformity::InverseProbability, "fp", vec![a.clone(), b.clone()]).unwrap();
        for smoothed in [false, true] {
            prop_assert_eq!(p_value(&t, s, 0, smoothed).unwrap(), brute_p_value(&a, s, smoothed));
            prop_assert_eq!(p_value(&t, s, 1, smoothed).unwrap(), brute_p_value(&b, s, smoothed));
        }
    }
}

proptest! {
    #[test]
    fn p_values_bounded_and_monotone(a in grid_scores(30), s1 in 0.0f64..1.2, s2 in 0.0f64..1.2) {
        let t = CalibrationTable::from_scores(labels(2), Nonconformity::InverseProbability, "fp", vec![a.clone(), a]).unwrap();
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        for smoothed in [false, true] {
            let p_lo = p_value(&t, lo, 0, smoothed).unwrap();
            let p_hi = p_value(&t, hi, 0, smoothed).unwrap();
            prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
            prop_assert!(p_hi <= p_lo);
        }
        let n = t.class_scores(0).len() as f64;
        prop_assert!(p_value(&t, hi, 0, true).unwrap() >= 1.0 / (n + 1.0));
        prop_assert!(p_value(&t, hi, 0, true).unwrap() >= p_value(&t, hi, 0, false).unwrap());
    }

    #[test]
    fn records_are_coherent(p in pvec(2..=6), alpha in 0.001f64..0.999) {
        let r = record_from_pvalues("r", p.clone(), alpha).unwrap();
        prop_assert!(r.is_coherent());
        prop_assert_eq!(r.rejected, r.prediction_set.is_empty());
        prop_assert!((0.0..=1.0).contains(&r.confidence) && (0.0..=1.0).contains(&r.credibility));
        let mut sorted = p;
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(r.credibility, sorted[0]);
        prop_assert!((r.confidence - (1.0 - sorted[1])).abs() < 1e-15);
    }

    #[test]
    fn sets_shrink_as_alpha_grows(p in pvec(2..=6), a1 in 0.001f64..0.999, a2 in 0.001f64..0.999) {
        let (small, large) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let wide = record_from_pvalues("r", p.clone(), small).unwrap();
        let narrow = record_from_pvalues("r", p, large).unwrap();
        prop_assert!(narrow.prediction_set.iter().all(|k| wide.contains(*k)));
    }

    #[test]
    fn ranking_permutes_eligible_records(
        rows in prop::collection::vec((pvec(3..=3), 0usize..1000), 0..40),
        targets in prop::collection::btree_set(0usize..3, 0..=3),
    ) {
        let targets: Vec<usize> = targets.into_iter().collect();
        let recs: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, (p, _))| record_from_pvalues(format!("r{i}"), p.clone(), 0.1).unwrap())
            .collect();
        let ranked = ranking(&recs, &targets);
        let mut got: Vec<&str> = ranked.iter().map(|e| e.id.as_str()).collect();
        let mut want: Vec<&str> = recs
            .iter()
            .filter(|r| !r.rejected && targets.contains(&r.point_prediction))
            .map(|r| r.id.as_str())
            .collect();
        got.sort_unstable();
        want.sort_unstable();
        prop_assert_eq!(got, want);
        for w in ranked.windows(2) {
            prop_assert!(
                w[0].confidence > w[1].confidence
                    || (w[0].confidence == w[1].confidence && w[0].credibility >= w[1].credibility)
            );
        }
    }

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec((prop::collection::vec(-1e6f64..1e6, 3), 0usize..3), 3..30),
    ) {
        let ys: Vec<usize> = rows.iter().map(|r| r.1).chain([0, 1, 2]).collect();
        let inst: Vec<Instance> = rows
            .iter()
            .map(|r| r.0.clone())
            .chain([vec![0.0; 3], vec![1.0; 3], vec![2.0; 3]])
            .enumerate()
            .map(|(i, f)| Instance::new(format!("id{i}"), f))
            .collect();
        // labels in order of first appearance, as the reader assigns them
        let ds = Dataset::new(labels(3), vec!["a".into(), "b".into(), "c".into()], inst, ys).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf, "label").unwrap();
        let back = read_csv(buf.as_slice(), "label").unwrap();
        prop_assert_eq!(back.instances(), ds.instances());
        let names: Vec<&str> = back.labels().iter().map(|&y| back.label_set().name(y)).collect();
        let want: Vec<&str> = ds.labels().iter().map(|&y| ds.label_set().name(y)).collect();
        prop_assert_eq!(names, want);
    }

    #[test]
    fn split_partitions_rows(n0 in 3usize..40, n1 in 3usize..40, seed in any::<u64>(), stratified in any::<bool>()) {
        let ds = synth_benchmark(&[n0, n1], 2, 1.0, 0).unwrap();
        let spec = SplitSpec { ratios: [2.0, 1.0, 1.0], seed, stratified };
        let (a, b, c) = split(&ds, &spec).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), ds.len());
        let mut ids: Vec<&str> = a.instances().iter().chain(b.instances()).chain(c.instances()).map(|x| x.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), ds.len());
        prop_assert_eq!(split(&ds, &spec).unwrap(), (a, b, c));
        let tiny = synth_benchmark(&[n0, 2], 2, 1.0, 0).unwrap();
        prop_assert_eq!(split(&tiny, &spec).is_err(), stratified);
    }
}

/// Adaptive-set score recomputed from its definition: total mass of labels
/// ranked at or above `y` (ties toward the lower index).
fn aps_score(p: &[f64], y: usize) -> f64 {
    (0..p.len())
        .filter(|&j| p[j] > p[y] || (p[j] == p[y] && j <= y))
        .map(|j| p[j])
        .sum()
}

/// Probability rows on a 1/64 grid, so every partial sum is exact.
fn dyadic_rows(k: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(1u32..=16, k), n).prop_map(|rows| {
        rows.into_iter()
            .map(|w| {
                // scale weights onto a 64-unit budget, remainder on the first label
                let total: u32 = w.iter().sum();
                let mut units: Vec<u32> = w.iter().map(|v| v * 64 / total).collect();
                units[0] += 64 - units.iter().sum::<u32>();
                units.into_iter().map(|u| f64::from(u) / 64.0).collect()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn raps_without_penalty_is_aps(
        (k, rows, ys) in (2usize..=5, 4usize..=30).prop_flat_map(|(k, n)| {
            (Just(k), dyadic_rows(k, n + 5), prop::collection::vec(0..k, n))
        }),
        percent in 1u32..=60,
    ) {
        let n = ys.len();
        let m = TableModel::new(rows.clone());
        let cal = m.dataset(&ys);
        let alpha = f64::from(percent) / 100.0;
        let cfg = RapsConfig { lambda: 0.0, k_reg: 1, ..Default::default() };
        let pred = raps_predictor(&m, &cal, alpha, cfg).unwrap();

        let scores: Vec<f64> = ys.iter().enumerate().map(|(i, &y)| aps_score(&rows[i], y)).collect();
        // ⌈(n+1)(100−percent)/100⌉ in integers
        let rank = ((n as u32 + 1) * (100 - percent)).div_ceil(100) as usize;
        let q = order_statistic(&scores, rank);
        prop_assert_eq!(pred.state.threshold, q);
        for (i, p) in rows.iter().enumerate() {
            let top = (0..k).fold(0, |b, j| if p[j] > p[b] { j } else { b });
            let want: Vec<usize> = (0..k).filter(|&j| j == top || aps_score(p, j) <= q).collect();
            prop_assert_eq!(pred.predict_set(&m.instance(i)), want);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn confusion_partitions_batch(
        rows in prop::collection::vec((pvec(3..=3), 0usize..3), 0..25),
        alpha in 0.01f64..0.99,
    ) {
        let recs: Vec<_> = rows.iter().map(|(p, _)| record_from_pvalues("r", p.clone(), alpha).unwrap()).collect();
        let truths: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let c = set_confusion(&recs, &truths).unwrap();
        prop_assert_eq!(c.correct_singleton + c.incorrect_singleton + c.inconclusive + c.empty, recs.len());
    }
}

fn fitted() -> (Dataset, Vec<Box<dyn ScoreModel>>) {
    let ds = synth_benchmark(&[40, 30, 20], 3, 1.5, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        ..Default::default()
    };
    let models: Vec<Box<dyn ScoreModel>> = vec![
        Box::new(fit_logistic(&ds, &cfg).unwrap()),
        Box::new(fit_knn(&ds, 7).unwrap()),
        Box::new(fit_bagged(&ds, &cfg, 3).unwrap()),
    ];
    (ds, models)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn models_return_distributions(x in prop::collection::vec(-50.0f64..50.0, 3)) {
        let (_, models) = fitted();
        for m in &models {
            let p = m.predict_proba(&x);
            prop_assert!(is_valid_distribution(&p, 3), "{:?}", p);
            prop_assert_eq!(m.predict_proba(&x), p);
        }
    }

    #[test]
    fn batch_matches_single_predictions(seed in 0u64..1000, alpha in 0.01f64..0.99, smoothed in any::<bool>()) {
        let ds = synth_benchmark(&[30, 30, 30], 2, 1.0, seed).unwrap();
        let (tr, ca, te) = split(&ds, &SplitSpec::standard(seed)).unwrap();
        let m = fit_logistic(&tr, &TrainConfig { epochs: 10, ..Default::default() }).unwrap();
        let t = calibrate(&m, &ca, Nonconformity::InverseProbability).unwrap();
        let batch = predict_batch(&m, &t, &te, alpha, smoothed).unwrap();
        for (r, x) in batch.iter().zip(te.instances()) {
            prop_assert_eq!(r, &predict(&m, &t, x, alpha, smoothed).unwrap());
        }
    }

    #[test]
    fn set_size_falls_with_alpha(seed in 0u64..1000) {
        let ds = synth_benchmark(&[40, 40, 40], 2, 1.0, seed).unwrap();
        let (tr, ca, te) = split(&ds, &SplitSpec::standard(seed)).unwrap();
        let m = fit_logistic(&tr, &TrainConfig { epochs: 10, ..Default::default() }).unwrap();
        let t = calibrate(&m, &ca, Nonconformity::InverseProbability).unwrap();
        let rows = alpha_sweep(&m, &t, &te, &standard_alphas(), true).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[1].avg_c <= w[0].avg_c);
        }
        for r in &rows {
            prop_assert!((0.0..=1.0).contains(&r.mean_err) && r.avg_c <= 3.0 && r.n_correct <= r.n);
        }
        let dup = alpha_sweep(&m, &t, &te, &[0.3, 0.3], true).unwrap();
        prop_assert_eq!(&dup[0], &dup[1]);
    }
}
