use super::{document_fingerprint, AnyModel, ScoreModel, Standardizer};
use crate::data::{Dataset, LabelSet};
use crate::error::{Error, Result};

/// k-nearest-neighbour scorer returning Laplace-smoothed vote fractions
/// `(votes + 1) / (k + K)`. Distances are Euclidean on standardized features;
/// equidistant neighbours are taken in training order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub(crate) label_set: LabelSet,
    pub(crate) feature_names: Vec<String>,
    pub(crate) k: usize,
    pub(crate) standardizer: Standardizer,
    /// Standardized training points.
    pub(crate) points: Vec<Vec<f64>>,
    pub(crate) labels: Vec<usize>,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }
}

pub fn fit_knn(train: &Dataset, k: usize) -> Result<KnnModel> {
    if k == 0 || k > train.len() {
        return Err(Error::invalid(format!(
            "k must be in 1..={} (training size), got {k}",
            train.len()
        )));
    }
    let standardizer = Standardizer::fit(train);
    Ok(KnnModel {
        label_set: train.label_set().clone(),
        feature_names: train.feature_names().to_vec(),
        k,
        points: train
            .instances()
            .iter()
            .map(|x| standardizer.apply(&x.features))
            .collect(),
        labels: train.labels().to_vec(),
        standardizer,
    })
}

impl ScoreModel for KnnModel {
    fn n_classes(&self) -> usize {
        self.label_set.len()
    }

    fn dim(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        let z = self.standardizer.apply(features);
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    p.iter()
                        .zip(&z)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>(),
                    i,
                )
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n_classes = self.n_classes();
        let mut votes = vec![1.0; n_classes];
        for &(_, i) in dist.iter().take(self.k) {
            votes[self.labels[i]] += 1.0;
        }
        let denom = (self.k + n_classes) as f64;
        votes.iter_mut().for_each(|v| *v /= denom);
        votes
    }

    fn fingerprint(&self) -> String {
        document_fingerprint(&AnyModel::Knn(self.clone()))
    }
}
