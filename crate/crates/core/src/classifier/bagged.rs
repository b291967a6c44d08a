use rand::Rng;

use super::{document_fingerprint, fit_logistic, AnyModel, LogisticModel, ScoreModel, TrainConfig};
use crate::data::{Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Average of logistic models fit on class-stratified bootstrap resamples.
///
/// With the inverse-probability nonconformity score, averaging probabilities
/// is the same as averaging nonconformity over the members.
#[derive(Debug, Clone, PartialEq)]
pub struct BaggedModel {
    pub(crate) members: Vec<LogisticModel>,
    pub(crate) seed: u64,
}

impl BaggedModel {
    pub fn members(&self) -> &[LogisticModel] {
        &self.members
    }
}

impl LogisticModel {
    pub(crate) fn label_set_ref(&self) -> &LabelSet {
        &self.label_set
    }
}

pub fn fit_bagged(train: &Dataset, cfg: &TrainConfig, n_members: usize) -> Result<BaggedModel> {
    if n_members == 0 {
        return Err(Error::invalid("ensemble needs at least one member"));
    }
    let by_class: Vec<Vec<usize>> = (0..train.n_classes())
        .map(|k| {
            (0..train.len())
                .filter(|&i| train.labels()[i] == k)
                .collect()
        })
        .collect();
    let members = (0..n_members)
        .map(|t| {
            let mut rng = RngStream::new(cfg.seed, 100 + t as u64);
            let mut idx = Vec::with_capacity(train.len());
            for members in &by_class {
                for _ in 0..members.len() {
                    idx.push(members[rng.random_range(0..members.len())]);
                }
            }
            fit_logistic(
                &train.subset(&idx),
                &TrainConfig {
                    seed: cfg.seed.wrapping_add(t as u64),
                    ..*cfg
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaggedModel {
        members,
        seed: cfg.seed,
    })
}

impl ScoreModel for BaggedModel {
    fn n_classes(&self) -> usize {
        self.members[0].n_classes()
    }

    fn dim(&self) -> usize {
        self.members[0].dim()
    }

    fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes()];
        for m in &self.members {
            for (a, p) in acc.iter_mut().zip(m.predict_proba(features)) {
                *a += p;
            }
        }
        let t = self.members.len() as f64;
        acc.iter_mut().for_each(|a| *a /= t);
        acc
    }

    fn fingerprint(&self) -> String {
        document_fingerprint(&AnyModel::Bagged(self.clone()))
    }
}
