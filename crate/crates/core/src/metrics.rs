//! Coverage and efficiency metrics, the α-sweep table, the set-prediction
//! confusion matrix, confidence ranking, and an empirical check of the
//! `P(y ∈ C(x)) ≥ 1 − α` guarantee.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_logistic, ScoreModel, TrainConfig};
use crate::conformal::{
    calibrate, check_alpha, p_value_matrix, predict_batch, CalibrationTable, Nonconformity,
    PredictionRecord,
};
use crate::data::{synth_benchmark, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngStream;

fn check_lengths(records: &[PredictionRecord], truths: &[usize]) -> Result<()> {
    if records.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: truths.len(),
        });
    }
    Ok(())
}

/// Fraction of records whose set contains the true label.
pub fn effective_coverage(records: &[PredictionRecord], truths: &[usize]) -> Result<f64> {
    check_lengths(records, truths)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hit = records
        .iter()
        .zip(truths)
        .filter(|(r, &y)| r.contains(y))
        .count();
    Ok(hit as f64 / records.len() as f64)
}

/// Mean prediction-set size (`avg_c`).
pub fn avg_set_size(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(records
        .iter()
        .map(|r| r.prediction_set.len())
        .sum::<usize>() as f64
        / records.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetConfusion {
    pub correct_singleton: usize,
    pub incorrect_singleton: usize,
    /// Two or more labels.
    pub inconclusive: usize,
    /// Rejected (NULL set).
    pub empty: usize,
}

impl SetConfusion {
    pub fn total(&self) -> usize {
        self.correct_singleton + self.incorrect_singleton + self.inconclusive + self.empty
    }

    fn add_set(&mut self, set: &[usize], truth: usize) {
        match set {
            [] => self.empty += 1,
            [k] if *k == truth => self.correct_singleton += 1,
            [_] => self.incorrect_singleton += 1,
            _ => self.inconclusive += 1,
        }
    }
}

pub fn set_confusion(records: &[PredictionRecord], truths: &[usize]) -> Result<SetConfusion> {
    check_lengths(records, truths)?;
    let mut c = SetConfusion::default();
    for (r, &y) in records.iter().zip(truths) {
        c.add_set(&r.prediction_set, y);
    }
    Ok(c)
}

/// [`set_confusion`] over plain label sets, for predictors without p-values.
pub fn confusion_of_sets(sets: &[Vec<usize>], truths: &[usize]) -> Result<SetConfusion> {
    if sets.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: sets.len(),
            right: truths.len(),
        });
    }
    let mut c = SetConfusion::default();
    for (s, &y) in sets.iter().zip(truths) {
        c.add_set(s, y);
    }
    Ok(c)
}

/// One significance level of the performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sig: f64,
    pub mean_err: f64,
    pub avg_c: f64,
    /// Rows whose set contains the truth.
    pub n_correct: usize,
    pub n: usize,
    /// `1 − coverage` restricted to each true class (0 for classes absent from the test set).
    pub class_err: Vec<f64>,
}

fn sweep_row(pvals: &[Vec<f64>], truths: &[usize], n_classes: usize, alpha: f64) -> SweepRow {
    let mut covered = 0usize;
    let mut size = 0usize;
    let mut class_hits = vec![0usize; n_classes];
    let mut class_n = vec![0usize; n_classes];
    for (p, &y) in pvals.iter().zip(truths) {
        size += p.iter().filter(|&&v| v > alpha).count();
        class_n[y] += 1;
        if p[y] > alpha {
            covered += 1;
            class_hits[y] += 1;
        }
    }
    let n = truths.len();
    let coverage = covered as f64 / n as f64;
    SweepRow {
        sig: alpha,
        mean_err: 1.0 - coverage,
        avg_c: size as f64 / n as f64,
        n_correct: covered,
        n,
        class_err: class_hits
            .iter()
            .zip(&class_n)
            .map(|(&h, &c)| {
                if c > 0 {
                    1.0 - h as f64 / c as f64
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Evaluates the same test set at several significance levels.
pub fn alpha_sweep<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    test: &Dataset,
    alphas: &[f64],
    smoothed: bool,
) -> Result<Vec<SweepRow>> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let pvals = p_value_matrix(model, table, test, smoothed)?;
    Ok(alphas
        .iter()
        .map(|&a| sweep_row(&pvals, test.labels(), test.n_classes(), a))
        .collect())
}

/// The significance levels of the standard performance table: 0.05, 0.1, 0.2, …, 0.9.
pub fn standard_alphas() -> Vec<f64> {
    let mut v = vec![0.05];
    v.extend((1..=9).map(|i| i as f64 / 10.0));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCheckConfig {
    pub n_trials: usize,
    pub n_cal: usize,
    pub n_test: usize,
    /// Rows used to fit the per-trial classifier.
    pub n_train: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Relative class frequencies of the generated data.
    pub class_weights: Vec<f64>,
    pub dim: usize,
    pub separation: f64,
}

impl CoverageCheckConfig {
    /// Balanced three-class benchmark with overlapping classes.
    pub fn new(n_trials: usize, n_cal: usize, n_test: usize, alpha: f64, seed: u64) -> Self {
        Self {
            n_trials,
            n_cal,
            n_test,
            n_train: n_cal,
            alpha,
            seed,
            class_weights: vec![1.0, 1.0, 1.0],
            dim: 4,
            separation: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub n_trials: usize,
    pub n_evaluated: usize,
    /// Pooled coverage over all trials.
    pub coverage: f64,
    /// Coverage restricted to each true class, averaged over trials.
    pub class_coverage: Vec<f64>,
    /// `1 − α − 2·√(α(1−α)/(n_trials·n_test))`.
    pub bound: f64,
    pub pass: bool,
}

/// Splits `n` rows over classes proportionally to `weights` by largest
/// remainder, with at least one row per class.
fn class_counts(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let left = n.saturating_sub(counts.iter().sum());
    for &k in order.iter().take(left) {
        counts[k] += 1;
    }
    counts.iter_mut().for_each(|c| *c = (*c).max(1));
    counts
}

/// Repeats generate → fit → calibrate → predict with smoothed p-values.
pub fn coverage_guarantee_check_with(cfg: &CoverageCheckConfig) -> Result<CoverageReport> {
    if cfg.n_trials == 0 || cfg.n_cal == 0 || cfg.n_test == 0 || cfg.n_train == 0 {
        return Err(Error::invalid("trial and sample sizes must be positive"));
    }
    check_alpha(cfg.alpha)?;
    let k = cfg.class_weights.len();
    if k < 2 || cfg.class_weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("need at least two positive class weights"));
    }
    let root = RngStream::new(cfg.seed, 0);
    let trials: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| -> Result<(Vec<usize>, Vec<usize>)> {
            let mut rng = root.fork(t as u64);
            let gen = |n: usize, rng: &mut RngStream| {
                synth_benchmark(
                    &class_counts(n, &cfg.class_weights),
                    cfg.dim,
                    cfg.separation,
                    rng.next_u64(),
                )
            };
            let train = gen(cfg.n_train, &mut rng)?;
            let cal = gen(cfg.n_cal, &mut rng)?;
            let test = gen(cfg.n_test, &mut rng)?;
            let model = fit_logistic(
                &train,
                &TrainConfig {
                    epochs: 100,
                    seed: rng.next_u64(),
                    ..TrainConfig::default()
                },
            )?;
            let table = calibrate(&model, &cal, Nonconformity::InverseProbability)?;
            let records = predict_batch(&model, &table, &test, cfg.alpha, true)?;
            let mut hits = vec![0usize; k];
            let mut counts = vec![0usize; k];
            for (r, &y) in records.iter().zip(test.labels()) {
                counts[y] += 1;
                if r.contains(y) {
                    hits[y] += 1;
                }
            }
            Ok((hits, counts))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hits = 0usize;
    let mut total = 0usize;
    let mut class_cov = vec![0.0; k];
    for (h, c) in &trials {
        hits += h.iter().sum::<usize>();
        total += c.iter().sum::<usize>();
        for j in 0..k {
            class_cov[j] += h[j] as f64 / c[j] as f64;
        }
    }
    class_cov.iter_mut().for_each(|c| *c /= cfg.n_trials as f64);
    let coverage = hits as f64 / total as f64;
    let a = cfg.alpha;
    let bound = 1.0 - a - 2.0 * (a * (1.0 - a) / (cfg.n_trials * cfg.n_test) as f64).sqrt();
    Ok(CoverageReport {
        alpha: a,
        n_trials: cfg.n_trials,
        n_evaluated: total,
        coverage,
        class_coverage: class_cov,
        bound,
        pass: coverage >= bound,
    })
}

/// Balanced three-class check; returns `(coverage, pass)`.
pub fn coverage_guarantee_check(
    n_trials: usize,
    n_cal: usize,
    n_test: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, bool)> {
    let r = coverage_guarantee_check_with(&CoverageCheckConfig::new(
        n_trials, n_cal, n_test, alpha, seed,
    ))?;
    Ok((r.coverage, r.pass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub id: String,
    pub point: usize,
    pub confidence: f64,
    pub credibility: f64,
}

/// Non-rejected records predicted as a target label, by confidence then
/// credibility (both descending), then id.
pub fn ranking(records: &[PredictionRecord], targets: &[usize]) -> Vec<RankEntry> {
    let mut out: Vec<RankEntry> = records
        .iter()
        .filter(|r| !r.rejected && targets.contains(&r.point_prediction))
        .map(|r| RankEntry {
            id: r.id.clone(),
            point: r.point_prediction,
            confidence: r.confidence,
            credibility: r.credibility,
        })
        .collect();
    out.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(b.credibility.total_cmp(&a.credibility))
            .then_with(|| a.id.cmp(&b.id))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::record_from_pvalues;

    /// Record whose set is exactly `set` over `k` labels.
    fn rec(set: &[usize], k: usize) -> PredictionRecord {
        let p = (0..k)
            .map(|j| if set.contains(&j) { 0.9 } else { 0.01 })
            .collect();
        record_from_pvalues("r", p, 0.05).unwrap()
    }

    #[test]
    fn coverage_hand_count() {
        let rs = vec![rec(&[0], 2), rec(&[0, 1], 2), rec(&[], 2)];
        assert!((effective_coverage(&rs, &[0, 1, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(avg_set_size(&rs).unwrap(), 1.0);
        assert!(effective_coverage(&rs, &[0]).is_err());
        assert!(avg_set_size(&[]).is_err());
        let full = vec![rec(&[0, 1, 2], 3); 4];
        assert_eq!(effective_coverage(&full, &[0, 1, 2, 0]).unwrap(), 1.0);
        assert_eq!(avg_set_size(&full).unwrap(), 3.0);
        let none = vec![rec(&[], 3); 2];
        assert_eq!(effective_coverage(&none, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn confusion_hand_tally() {
        let rs = vec![rec(&[0], 2), rec(&[1], 2), rec(&[0, 1], 2), rec(&[], 2)];
        let c = set_confusion(&rs, &[0, 0, 0, 0]).unwrap();
        assert_eq!(
            c,
            SetConfusion {
                correct_singleton: 1,
                incorrect_singleton: 1,
                inconclusive: 1,
                empty: 1
            }
        );
        assert_eq!(set_confusion(&[], &[]).unwrap(), SetConfusion::default());
        assert!(set_confusion(&rs, &[0]).is_err());
    }

    #[test]
    fn ranking_tie_rules() {
        let mut a = record_from_pvalues("a", vec![0.1, 0.9], 0.05).unwrap();
        let mut b = record_from_pvalues("b", vec![0.1, 0.2], 0.05).unwrap();
        // force equal confidence, differing credibility
        a.confidence = 0.5;
        b.confidence = 0.5;
        let r = ranking(&[b.clone(), a.clone()], &[1]);
        assert_eq!(
            r.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(),
            vec!["a", "b"]
        );
        assert!(ranking(&[a, b], &[0]).is_empty());
    }

    #[test]
    fn standard_alpha_grid() {
        let a = standard_alphas();
        assert_eq!(a.len(), 10);
        assert_eq!(a[0], 0.05);
        assert_eq!(a[9], 0.9);
    }
}
