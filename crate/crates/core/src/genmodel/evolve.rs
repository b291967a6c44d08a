//! Evolved-dataset assembly and real-vs-synthetic marginal diagnostics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::extended_float;
use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Label names used when assembling an evolved dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolveLabels {
    /// Trojan-free.
    pub free: String,
    /// Trojan-infected.
    pub infected: String,
    /// Evolved Trojan, assigned to generated infected rows.
    pub evolved: String,
}

impl Default for EvolveLabels {
    fn default() -> Self {
        Self {
            free: "TF".into(),
            infected: "TI".into(),
            evolved: "T-EV".into(),
        }
    }
}

/// Source rows unchanged, then generated free rows (labelled free), then
/// generated infected rows (labelled evolved). Generated ids get a `gen-` prefix.
pub fn assemble_evolved(
    source: &Dataset,
    generated_infected: &[Instance],
    generated_free: &[Instance],
    labels: &EvolveLabels,
) -> Result<Dataset> {
    let counts = source.class_counts();
    let mut label_set = source.label_set().clone();
    let mut missing = Vec::new();
    for name in [&labels.free, &labels.infected] {
        match label_set.index_of(name) {
            Some(k) if counts[k] > 0 => {}
            _ => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let free = label_set.index_of(&labels.free).unwrap();
    let evolved = label_set.extend_with(&labels.evolved);

    let mut instances = source.instances().to_vec();
    let mut ys = source.labels().to_vec();
    for (rows, y) in [(generated_free, free), (generated_infected, evolved)] {
        for inst in rows {
            if inst.dim() != source.dim() {
                return Err(Error::DimensionMismatch {
                    expected: source.dim(),
                    found: inst.dim(),
                });
            }
            instances.push(Instance::new(
                format!("gen-{}", inst.id),
                inst.features.clone(),
            ));
            ys.push(y);
        }
    }
    Dataset::new(label_set, source.feature_names().to_vec(), instances, ys)
}

/// Uniformly keeps `round(n · fraction)` instances, preserving their order.
pub fn select_fraction(instances: &[Instance], fraction: f64, seed: u64) -> Result<Vec<Instance>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid("fraction must lie in [0, 1]"));
    }
    let keep = (instances.len() as f64 * fraction).round() as usize;
    let mut idx: Vec<usize> = (0..instances.len()).collect();
    idx.shuffle(&mut RngStream::new(seed, 2));
    idx.truncate(keep);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| instances[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalStats {
    pub feature: String,
    /// synthetic mean − real mean.
    pub mean_diff: f64,
    /// synthetic std / real std (1 when both are zero).
    #[serde(with = "extended_float")]
    pub std_ratio: f64,
    /// Two-sample Kolmogorov–Smirnov statistic.
    pub ks: f64,
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn compare_marginals(real: &Dataset, synth: &Dataset) -> Result<Vec<MarginalStats>> {
    if real.dim() != synth.dim() {
        return Err(Error::DimensionMismatch {
            expected: real.dim(),
            found: synth.dim(),
        });
    }
    if real.is_empty() || synth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (rm, rs) = real.feature_moments();
    let (sm, ss) = synth.feature_moments();
    Ok((0..real.dim())
        .map(|j| {
            let col = |ds: &Dataset| {
                ds.instances()
                    .iter()
                    .map(|x| x.features[j])
                    .collect::<Vec<_>>()
            };
            let std_ratio = if rs[j] == 0.0 && ss[j] == 0.0 {
                1.0
            } else {
                ss[j] / rs[j]
            };
            MarginalStats {
                feature: real.feature_names()[j].clone(),
                mean_diff: sm[j] - rm[j],
                std_ratio,
                ks: ks_statistic(&col(real), &col(synth)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_basics() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[5.0, 6.0]), 1.0);
        // F_a jumps to 1/2 at 1, F_b to 1/2 at 2
        assert_eq!(ks_statistic(&[1.0, 3.0], &[2.0, 3.0]), 0.5);
    }

    #[test]
    fn fraction_counts() {
        let inst: Vec<Instance> = (0..10_000)
            .map(|i| Instance::new(i.to_string(), vec![i as f64]))
            .collect();
        let kept = select_fraction(&inst, 0.2, 5).unwrap();
        assert_eq!(kept.len(), 2000);
        assert!(kept.windows(2).all(|w| w[0].features[0] < w[1].features[0]));
        assert_eq!(kept, select_fraction(&inst, 0.2, 5).unwrap());
        assert!(select_fraction(&inst, 1.5, 5).is_err());
    }
}
