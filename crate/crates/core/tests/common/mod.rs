//! Test doubles and brute-force references shared by the integration tests.
#![allow(dead_code)]

use riskcp::{Dataset, Instance, LabelSet, ScoreModel};

/// Returns a fixed probability row per instance: `predict_proba([i])` is `probs[i]`.
pub struct TableModel {
    pub probs: Vec<Vec<f64>>,
}

impl TableModel {
    pub fn new(probs: Vec<Vec<f64>>) -> Self {
        assert!(!probs.is_empty());
        Self { probs }
    }

    pub fn labels(&self) -> LabelSet {
        LabelSet::new((0..self.probs[0].len()).map(|k| format!("c{k}"))).unwrap()
    }

    pub fn instance(&self, i: usize) -> Instance {
        Instance::new(format!("r{i}"), vec![i as f64])
    }

    /// Row `i` labelled `ys[i]`, for `i < ys.len()`.
    pub fn dataset(&self, ys: &[usize]) -> Dataset {
        self.dataset_rows(&(0..ys.len()).collect::<Vec<_>>(), ys)
    }

    pub fn dataset_rows(&self, rows: &[usize], ys: &[usize]) -> Dataset {
        Dataset::new(
            self.labels(),
            vec!["row".into()],
            rows.iter().map(|&i| self.instance(i)).collect(),
            ys.to_vec(),
        )
        .unwrap()
    }
}

impl ScoreModel for TableModel {
    fn n_classes(&self) -> usize {
        self.probs[0].len()
    }

    fn dim(&self) -> usize {
        1
    }

    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        self.probs[features[0] as usize].clone()
    }

    fn fingerprint(&self) -> String {
        format!("table-{}", self.probs.len())
    }
}

/// Recount of the p-value definition straight from the score list.
pub fn brute_p_value(scores: &[f64], s: f64, smoothed: bool) -> f64 {
    let ge = scores.iter().filter(|&&a| a >= s).count() as f64;
    let n = scores.len() as f64;
    if smoothed {
        (ge + 1.0) / (n + 1.0)
    } else {
        ge / n
    }
}

/// k-th smallest (1-based) after sorting, `+∞` past the end.
pub fn order_statistic(scores: &[f64], k: usize) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    if k == 0 || k > s.len() {
        f64::INFINITY
    } else {
        s[k - 1]
    }
}

/// Three classes over four features where only feature `planted` moves the
/// probabilities: `p = (s, (1−s)/2, (1−s)/2)` with `s = σ(3·x[planted])`.
pub struct PlantedModel {
    pub planted: usize,
}

impl PlantedModel {
    pub fn labels() -> LabelSet {
        LabelSet::new(["TF", "TI", "T-EV"]).unwrap()
    }

    pub fn feature_names() -> Vec<String> {
        (0..4).map(|j| format!("f{j}")).collect()
    }

    fn row(&self, id: String, v: f64, fill: f64) -> Instance {
        let mut f = vec![fill; 4];
        f[self.planted] = v;
        Instance::new(id, f)
    }

    /// TF rows spread over the planted coordinate in [−0.5, 2.5], the others far negative.
    pub fn calibration(&self, n_per_class: usize) -> Dataset {
        let mut inst = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_per_class {
            let u = (i as f64 + 0.5) / n_per_class as f64;
            inst.push(self.row(format!("tf{i}"), -0.5 + 3.0 * u, 0.0));
            ys.push(0);
            for y in 1..3 {
                inst.push(self.row(format!("c{y}-{i}"), -3.0 + 2.0 * u, 0.0));
                ys.push(y);
            }
        }
        Dataset::new(Self::labels(), Self::feature_names(), inst, ys).unwrap()
    }

    /// Sits between the classes: rejected at α = 0.2.
    pub fn ambiguous(&self) -> Instance {
        self.row("amb".into(), 0.0, 0.3)
    }
}

impl ScoreModel for PlantedModel {
    fn n_classes(&self) -> usize {
        3
    }

    fn dim(&self) -> usize {
        4
    }

    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        let s = 1.0 / (1.0 + (-3.0 * features[self.planted]).exp());
        vec![s, (1.0 - s) / 2.0, (1.0 - s) / 2.0]
    }

    fn fingerprint(&self) -> String {
        format!("planted-{}", self.planted)
    }
}
