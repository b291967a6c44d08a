//! Calibrated explanations for rejected (empty-set) decisions.
//!
//! The instance is perturbed with small Gaussian noise, each perturbation is
//! scored with the conformal p-values, and a locality-weighted linear
//! surrogate of each class p-value is fit in standardized feature units.
//! Reliability intervals on the surrogate coefficients come from a split
//! conformal step: the surrogate is refit on one half of the perturbations,
//! its absolute residuals on the other half give a quantile `q_α`, and each
//! coefficient gets the half-width
//!
//! ```text
//! q_α / (s_f · √n_eff) + |β_f − β_f^half|
//! ```
//!
//! where `s_f` is the weighted spread of feature `f` over the perturbations
//! and `n_eff = (Σw)² / Σw²`. The first term converts the residual quantile
//! into coefficient units; the second is the half-sample refit shift. This is
//! one concrete construction of "calibrated" attributions, not a canonical one.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ScoreModel;
use crate::conformal::{check_fingerprint, p_values, predict, CalibrationTable};
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::genmodel::extended_float;
use crate::linalg::cholesky_solve;
use crate::rng::RngStream;
use crate::setpredictors::conformal_quantile;

/// Minimum perturbation count accepted by the configuration.
pub const MIN_PERTURBATIONS: usize = 20;
/// Minimum perturbation count for the split-conformal calibration.
pub const MIN_CALIBRATION_PERTURBATIONS: usize = 40;
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub n_perturbations: usize,
    /// Noise scale as a multiple of each feature's standard deviation.
    pub sigma_scale: f64,
    /// Locality kernel width in standardized units; `None` means `0.75·√d`.
    pub kernel_width: Option<f64>,
    pub top_j: usize,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            n_perturbations: 200,
            sigma_scale: 0.1,
            kernel_width: None,
            top_j: 5,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    fn validate(&self) -> Result<()> {
        if self.n_perturbations < MIN_PERTURBATIONS {
            return Err(Error::invalid(format!(
                "need at least {MIN_PERTURBATIONS} perturbations, got {}",
                self.n_perturbations
            )));
        }
        if !(self.sigma_scale >= 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::invalid("sigma_scale must be finite and nonnegative"));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0) {
                return Err(Error::invalid("kernel width must be positive"));
            }
        }
        if self.top_j == 0 {
            return Err(Error::invalid("top_j must be positive"));
        }
        Ok(())
    }

    pub fn width(&self, d: usize) -> f64 {
        self.kernel_width.unwrap_or(0.75 * (d as f64).sqrt())
    }
}

fn check_stds(stds: &[f64], d: usize) -> Result<()> {
    if stds.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: stds.len(),
        });
    }
    if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("feature scales must be positive"));
    }
    Ok(())
}

/// `x + ε_j` with `ε_j ~ N(0, diag(sigma_scale·std)²)`.
pub fn perturb(x: &Instance, stds: &[f64], cfg: &PerturbConfig) -> Result<Vec<Instance>> {
    cfg.validate()?;
    check_stds(stds, x.dim())?;
    let mut rng = RngStream::new(cfg.seed, 3);
    Ok((0..cfg.n_perturbations)
        .map(|j| {
            let f = x
                .features
                .iter()
                .zip(stds)
                .map(|(v, s)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + cfg.sigma_scale * s * e
                })
                .collect();
            Instance::new(format!("{}~{j}", x.id), f)
        })
        .collect())
}

/// Weighted linear fit of one class p-value around the explained instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFit {
    pub class: usize,
    /// Coefficients per standardized feature unit.
    pub weights: Vec<f64>,
    /// Surrogate value at the explained instance.
    pub intercept: f64,
    /// Weighted R².
    pub r2: f64,
    /// The normal equations were singular and a 1e-6 ridge was added.
    pub ridge_fallback: bool,
}

struct Design {
    /// Standardized offsets `(x_j − x) / std`.
    z: Vec<Vec<f64>>,
    w: Vec<f64>,
}

fn design(perturbed: &[Instance], x: &Instance, stds: &[f64], width: f64) -> Design {
    let z: Vec<Vec<f64>> = perturbed
        .iter()
        .map(|p| {
            p.features
                .iter()
                .zip(&x.features)
                .zip(stds)
                .map(|((a, b), s)| (a - b) / s)
                .collect()
        })
        .collect();
    let w = z
        .iter()
        .map(|r: &Vec<f64>| (-r.iter().map(|v| v * v).sum::<f64>() / (width * width)).exp())
        .collect();
    Design { z, w }
}

/// Returns `(coefficients [intercept, β...], ridge_used)`.
fn weighted_ls(z: &[&[f64]], w: &[f64], y: &[f64]) -> Result<(Vec<f64>, bool)> {
    let d = z[0].len();
    let m = d + 1;
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    let mut row = vec![0.0; m];
    for ((zr, &wi), &yi) in z.iter().zip(w).zip(y) {
        row[0] = 1.0;
        row[1..].copy_from_slice(zr);
        for a in 0..m {
            atb[a] += wi * row[a] * yi;
            for b in 0..m {
                ata[a * m + b] += wi * row[a] * row[b];
            }
        }
    }
    if let Some(beta) = cholesky_solve(&ata, &atb) {
        return Ok((beta, false));
    }
    for a in 0..m {
        ata[a * m + a] += RIDGE;
    }
    cholesky_solve(&ata, &atb)
        .map(|b| (b, true))
        .ok_or(Error::Singular)
}

fn weighted_r2(z: &[&[f64]], w: &[f64], y: &[f64], beta: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((zr, &wi), &yi) in z.iter().zip(w).zip(y) {
        let pred = beta[0] + zr.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        ss_res += wi * (yi - pred).powi(2);
        ss_tot += wi * (yi - mean).powi(2);
    }
    if ss_tot <= 1e-300 {
        if ss_res <= 1e-24 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn check_inputs(
    perturbed: &[Instance],
    pvals: &[Vec<f64>],
    x: &Instance,
    stds: &[f64],
) -> Result<usize> {
    if perturbed.len() != pvals.len() {
        return Err(Error::LengthMismatch {
            left: perturbed.len(),
            right: pvals.len(),
        });
    }
    let d = x.dim();
    check_stds(stds, d)?;
    if perturbed.len() < d + 2 {
        return Err(Error::invalid(format!(
            "need at least d + 2 = {} perturbations, got {}",
            d + 2,
            perturbed.len()
        )));
    }
    if perturbed.iter().any(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: perturbed[0].dim(),
        });
    }
    let k = pvals[0].len();
    if k == 0 || pvals.iter().any(|p| p.len() != k) {
        return Err(Error::invalid(
            "p-value vectors must share a positive length",
        ));
    }
    Ok(k)
}

/// Per-class weighted least squares of `p_k` on standardized offsets from `x`.
pub fn local_surrogate(
    perturbed: &[Instance],
    pvals: &[Vec<f64>],
    x: &Instance,
    stds: &[f64],
    cfg: &PerturbConfig,
) -> Result<Vec<SurrogateFit>> {
    let k = check_inputs(perturbed, pvals, x, stds)?;
    let des = design(perturbed, x, stds, cfg.width(x.dim()));
    let z: Vec<&[f64]> = des.z.iter().map(Vec::as_slice).collect();
    (0..k)
        .map(|class| {
            let y: Vec<f64> = pvals.iter().map(|p| p[class]).collect();
            let (beta, ridge_fallback) = weighted_ls(&z, &des.w, &y)?;
            Ok(SurrogateFit {
                class,
                intercept: beta[0],
                r2: weighted_r2(&z, &des.w, &y, &beta),
                weights: beta[1..].to_vec(),
                ridge_fallback,
            })
        })
        .collect()
}

/// Reliability intervals for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientIntervals {
    pub class: usize,
    /// `(lo, hi)` per feature; always brackets the full-data coefficient.
    pub intervals: Vec<(f64, f64)>,
    /// Split-conformal quantile of absolute surrogate residuals.
    pub residual_quantile: f64,
}

/// Split-conformal reliability intervals for every surrogate coefficient.
pub fn calibrate_attributions(
    perturbed: &[Instance],
    pvals: &[Vec<f64>],
    x: &Instance,
    stds: &[f64],
    surrogate: &[SurrogateFit],
    alpha: f64,
    cfg: &PerturbConfig,
) -> Result<Vec<CoefficientIntervals>> {
    let k = check_inputs(perturbed, pvals, x, stds)?;
    if perturbed.len() < MIN_CALIBRATION_PERTURBATIONS {
        return Err(Error::invalid(format!(
            "need at least {MIN_CALIBRATION_PERTURBATIONS} perturbations to split, got {}",
            perturbed.len()
        )));
    }
    if surrogate.len() != k {
        return Err(Error::LengthMismatch {
            left: surrogate.len(),
            right: k,
        });
    }
    let d = x.dim();
    let des = design(perturbed, x, stds, cfg.width(d));
    let z: Vec<&[f64]> = des.z.iter().map(Vec::as_slice).collect();
    let half = perturbed.len() / 2;
    let (za, zb) = z.split_at(half);
    let (wa, _) = des.w.split_at(half);

    let sw: f64 = des.w.iter().sum();
    let n_eff = sw * sw / des.w.iter().map(|w| w * w).sum::<f64>();
    let spread: Vec<f64> = (0..d)
        .map(|f| {
            let m = z.iter().zip(&des.w).map(|(r, w)| w * r[f]).sum::<f64>() / sw;
            (z.iter()
                .zip(&des.w)
                .map(|(r, w)| w * (r[f] - m).powi(2))
                .sum::<f64>()
                / sw)
                .sqrt()
        })
        .collect();

    surrogate
        .iter()
        .map(|fit| {
            let y: Vec<f64> = pvals.iter().map(|p| p[fit.class]).collect();
            let (ya, yb) = y.split_at(half);
            let (beta_a, _) = weighted_ls(za, wa, ya)?;
            let residuals: Vec<f64> = zb
                .iter()
                .zip(yb)
                .map(|(r, yi)| {
                    let pred =
                        beta_a[0] + r.iter().zip(&beta_a[1..]).map(|(a, b)| a * b).sum::<f64>();
                    (yi - pred).abs()
                })
                .collect();
            let q = conformal_quantile(&residuals, alpha)?;
            let intervals = (0..d)
                .map(|f| {
                    let beta = fit.weights[f];
                    let mapped = if q == 0.0 {
                        0.0
                    } else if spread[f] > 0.0 {
                        q / (spread[f] * n_eff.sqrt())
                    } else {
                        f64::INFINITY
                    };
                    let h = mapped + (beta - beta_a[f + 1]).abs();
                    (beta - h, beta + h)
                })
                .collect();
            Ok(CoefficientIntervals {
                class: fit.class,
                intervals,
                residual_quantile: q,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Increasing the feature raises the class p-value.
    Toward,
    Away,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: String,
    pub class: String,
    pub weight: f64,
    #[serde(with = "extended_float")]
    pub lo: f64,
    #[serde(with = "extended_float")]
    pub hi: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostics {
    pub class: String,
    pub r2: f64,
    pub ridge_fallback: bool,
    #[serde(with = "extended_float")]
    pub residual_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub schema_version: String,
    pub id: String,
    pub alpha: f64,
    pub p_values: Vec<f64>,
    /// Top-J features per class, by descending |weight|.
    pub attributions: Vec<Attribution>,
    pub diagnostics: Vec<ClassDiagnostics>,
}

/// Explains why `x` receives an empty prediction set at `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn explain_reject<M: ScoreModel + ?Sized>(
    model: &M,
    table: &CalibrationTable,
    x: &Instance,
    alpha: f64,
    smoothed: bool,
    stds: &[f64],
    feature_names: &[String],
    cfg: &PerturbConfig,
) -> Result<Explanation> {
    let record = predict(model, table, x, alpha, smoothed)?;
    if !record.rejected {
        let set = record
            .prediction_set
            .iter()
            .map(|&k| table.label_set.name(k))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::NotARejection {
            id: x.id.clone(),
            set,
        });
    }
    if feature_names.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: feature_names.len(),
        });
    }
    check_fingerprint(model, table)?;
    let perturbed = perturb(x, stds, cfg)?;
    let pvals: Vec<Vec<f64>> = perturbed
        .par_iter()
        .map(|p| p_values(model, table, &p.features, smoothed))
        .collect();
    let fits = local_surrogate(&perturbed, &pvals, x, stds, cfg)?;
    let intervals = calibrate_attributions(&perturbed, &pvals, x, stds, &fits, alpha, cfg)?;

    let mut attributions = Vec::new();
    let mut diagnostics = Vec::new();
    for (fit, iv) in fits.iter().zip(&intervals) {
        let class = table.label_set.name(fit.class).to_string();
        let mut order: Vec<usize> = (0..x.dim()).collect();
        order.sort_by(|&a, &b| {
            fit.weights[b]
                .abs()
                .total_cmp(&fit.weights[a].abs())
                .then(a.cmp(&b))
        });
        for &f in order.iter().take(cfg.top_j) {
            let (lo, hi) = iv.intervals[f];
            attributions.push(Attribution {
                feature: feature_names[f].clone(),
                class: class.clone(),
                weight: fit.weights[f],
                lo,
                hi,
                direction: if fit.weights[f] >= 0.0 {
                    Direction::Toward
                } else {
                    Direction::Away
                },
            });
        }
        diagnostics.push(ClassDiagnostics {
            class,
            r2: fit.r2,
            ridge_fallback: fit.ridge_fallback,
            residual_quantile: iv.residual_quantile,
        });
    }
    Ok(Explanation {
        schema_version: crate::SCHEMA_VERSION.to_string(),
        id: x.id.clone(),
        alpha,
        p_values: record.p_values,
        attributions,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_pvals(perturbed: &[Instance], coef: &[f64], c: f64) -> Vec<Vec<f64>> {
        perturbed
            .iter()
            .map(|p| {
                vec![
                    c + p.features.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>(),
                    0.5,
                ]
            })
            .collect()
    }

    #[test]
    fn zero_scale_copies_instance() {
        let x = Instance::new("x", vec![1.0, 2.0]);
        let cfg = PerturbConfig {
            sigma_scale: 0.0,
            ..Default::default()
        };
        let p = perturb(&x, &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(p.len(), 200);
        assert!(p.iter().all(|q| q.features == x.features));
        assert!(perturb(&x, &[1.0], &cfg).is_err());
        assert!(perturb(
            &x,
            &[1.0, 1.0],
            &PerturbConfig {
                n_perturbations: 10,
                ..cfg
            }
        )
        .is_err());
    }

    #[test]
    fn recovers_linear_truth() {
        let x = Instance::new("x", vec![0.5, -1.0, 2.0]);
        let stds = [1.0, 2.0, 0.5];
        let cfg = PerturbConfig::default();
        let pert = perturb(&x, &stds, &cfg).unwrap();
        let raw = [0.3, -0.1, 0.05];
        let pv = linear_pvals(&pert, &raw, 0.2);
        let fits = local_surrogate(&pert, &pv, &x, &stds, &cfg).unwrap();
        for f in 0..3 {
            // per standardized unit
            assert!((fits[0].weights[f] - raw[f] * stds[f]).abs() < 1e-6);
            assert!(fits[1].weights[f].abs() < 1e-9);
        }
        let at_x = 0.2 + x.features.iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>();
        assert!((fits[0].intercept - at_x).abs() < 1e-9);
        assert!((fits[1].intercept - 0.5).abs() < 1e-12);
        assert!(fits[0].r2 > 1.0 - 1e-9);
    }

    #[test]
    fn too_few_perturbations() {
        let x = Instance::new("x", vec![0.0; 5]);
        let pert: Vec<Instance> = (0..6)
            .map(|i| Instance::new(i.to_string(), vec![i as f64; 5]))
            .collect();
        let pv = vec![vec![0.1, 0.2]; 6];
        assert!(local_surrogate(&pert, &pv, &x, &[1.0; 5], &PerturbConfig::default()).is_err());
    }

    #[test]
    fn singular_design_uses_ridge() {
        let x = Instance::new("x", vec![1.0, 1.0]);
        let cfg = PerturbConfig {
            sigma_scale: 0.0,
            ..Default::default()
        };
        let pert = perturb(&x, &[1.0, 1.0], &cfg).unwrap();
        let pv = vec![vec![0.3, 0.7]; pert.len()];
        let fits = local_surrogate(&pert, &pv, &x, &[1.0, 1.0], &cfg).unwrap();
        assert!(fits[0].ridge_fallback);
        assert!(fits[0].weights.iter().all(|w| w.abs() < 1e-9));
        assert!((fits[0].intercept - 0.3).abs() < 1e-6);
    }

    #[test]
    fn calibration_needs_forty() {
        let x = Instance::new("x", vec![0.0]);
        let cfg = PerturbConfig {
            n_perturbations: 30,
            ..Default::default()
        };
        let pert = perturb(&x, &[1.0], &cfg).unwrap();
        let pv = linear_pvals(&pert, &[0.1], 0.0);
        let fits = local_surrogate(&pert, &pv, &x, &[1.0], &cfg).unwrap();
        assert!(calibrate_attributions(&pert, &pv, &x, &[1.0], &fits, 0.1, &cfg).is_err());
    }
}
