use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MomentumSgd};
use crate::classifier::Standardizer;
use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, softplus};
use crate::rng::RngStream;
use crate::setpredictors::conformal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    /// Ensemble size M.
    pub members: usize,
    pub noise_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Miscoverage of the real-score interval.
    pub alpha: f64,
    /// Share of real rows held out from training to calibrate the interval.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            members: 5,
            noise_dim: 8,
            hidden: 32,
            epochs: 300,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            alpha: 0.1,
            holdout_fraction: 0.25,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.members == 0 || self.noise_dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::invalid(
                "members, noise_dim, hidden and batch_size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(
                "learning_rate must be positive and momentum in [0, 1)",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must be in (0, 1)"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanPair {
    pub generator: Mlp,
    /// Sigmoid output: probability that the input is real.
    pub discriminator: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanEnsemble {
    pub schema_version: String,
    /// Class the ensemble was trained on.
    pub label: String,
    pub feature_names: Vec<String>,
    pub members: Vec<GanPair>,
    pub noise_dim: usize,
    pub standardizer: Standardizer,
    #[serde(with = "super::extended_float")]
    pub interval_lo: f64,
    #[serde(with = "super::extended_float")]
    pub interval_hi: f64,
    pub alpha: f64,
    pub seed: u64,
    pub config: GanTrainConfig,
}

impl GanEnsemble {
    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Ensemble-mean discriminator output on raw features.
    pub fn score(&self, features: &[f64]) -> f64 {
        let z = self.standardizer.apply(features);
        self.members
            .iter()
            .map(|m| m.discriminator.forward(&z)[0])
            .sum::<f64>()
            / self.members.len() as f64
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.interval_lo, self.interval_hi)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let e: GanEnsemble = serde_json::from_str(text)?;
        let d = e.feature_names.len();
        let shapes_ok = !e.members.is_empty()
            && e.members.iter().all(|m| {
                m.generator.is_consistent()
                    && m.discriminator.is_consistent()
                    && m.generator.input_dim() == e.noise_dim
                    && m.generator.output_dim() == d
                    && m.discriminator.input_dim() == d
                    && m.discriminator.output_dim() == 1
            });
        if !shapes_ok || e.standardizer.means.len() != d || !(e.interval_lo <= e.interval_hi) {
            return Err(Error::invalid("inconsistent GAN ensemble document"));
        }
        Ok(e)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Two-sided split-conformal interval `[lo, hi]` with miscoverage `alpha`
/// split evenly between the tails. Either end may be infinite when there are
/// too few scores.
pub fn interval_from_scores(scores: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let hi = conformal_quantile(scores, alpha / 2.0)?;
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    let lo = -conformal_quantile(&neg, alpha / 2.0)?;
    Ok((lo, hi))
}

fn gaussian_vec(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Per-epoch mean losses of one member.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberTrace {
    pub discriminator_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
}

fn train_member(
    rows: &[Vec<f64>],
    cfg: &GanTrainConfig,
    rng: &mut RngStream,
) -> Result<(GanPair, MemberTrace)> {
    let d = rows[0].len();
    let mut generator = Mlp::new(
        &[cfg.noise_dim, cfg.hidden, d],
        Activation::Tanh,
        Activation::Linear,
        rng,
    );
    let mut discriminator = Mlp::new(
        &[d, cfg.hidden, 1],
        Activation::Tanh,
        Activation::Sigmoid,
        rng,
    );
    let mut g_opt = MomentumSgd::new(&generator, cfg.learning_rate, cfg.momentum);
    let mut d_opt = MomentumSgd::new(&discriminator, cfg.learning_rate, cfg.momentum);

    let n = rows.len();
    let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut order = boot.clone();
    let batch = cfg.batch_size.min(n);
    let mut trace = MemberTrace::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(batch) {
            let b = chunk.len();
            let scale = 1.0 / b as f64;

            // discriminator step: real → 1, generated → 0
            let mut dg = discriminator.zero_grads();
            let mut d_loss = 0.0;
            for &i in chunk {
                let c = discriminator.forward_cached(&rows[i]);
                let logit = c.logits[0];
                d_loss += softplus(-logit);
                discriminator.backward(&c, &[sigmoid(logit) - 1.0], true, &mut dg);
            }
            for _ in 0..b {
                let fake = generator.forward(&gaussian_vec(rng, cfg.noise_dim));
                let c = discriminator.forward_cached(&fake);
                let logit = c.logits[0];
                d_loss += softplus(logit);
                discriminator.backward(&c, &[sigmoid(logit)], true, &mut dg);
            }
            d_opt.step(&mut discriminator, &dg, scale);

            // generator step, non-saturating loss −log D(G(z))
            let mut gg = generator.zero_grads();
            let mut scratch = discriminator.zero_grads();
            let mut g_loss = 0.0;
            for _ in 0..b {
                let gc = generator.forward_cached(&gaussian_vec(rng, cfg.noise_dim));
                let fake = gc.output().to_vec();
                let dc = discriminator.forward_cached(&fake);
                let logit = dc.logits[0];
                g_loss += softplus(-logit);
                let dx = discriminator.backward(&dc, &[sigmoid(logit) - 1.0], true, &mut scratch);
                generator.backward(&gc, &dx, false, &mut gg);
            }
            g_opt.step(&mut generator, &gg, scale);

            d_sum += d_loss * scale;
            g_sum += g_loss * scale;
            steps += 1;
        }
        let (dl, gl) = (d_sum / steps as f64, g_sum / steps as f64);
        if !dl.is_finite()
            || !gl.is_finite()
            || !generator.is_finite()
            || !discriminator.is_finite()
        {
            return Err(Error::Divergence { epoch });
        }
        trace.discriminator_loss.push(dl);
        trace.generator_loss.push(gl);
    }
    Ok((
        GanPair {
            generator,
            discriminator,
        },
        trace,
    ))
}

/// Trains the ensemble and returns it with per-member loss traces.
pub fn gan_fit_traced(
    real: &Dataset,
    cfg: &GanTrainConfig,
) -> Result<(GanEnsemble, Vec<MemberTrace>)> {
    cfg.validate()?;
    if real.len() < 2 * cfg.batch_size {
        return Err(Error::invalid(format!(
            "need at least {} real rows (2 × batch size), got {}",
            2 * cfg.batch_size,
            real.len()
        )));
    }
    let classes: Vec<usize> = real
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, _)| k)
        .collect();
    if classes.len() != 1 {
        return Err(Error::invalid(
            "GAN training data must contain exactly one class",
        ));
    }
    let label = real.label_set().name(classes[0]).to_string();

    let mut rng = RngStream::new(cfg.seed, 0);
    let mut idx: Vec<usize> = (0..real.len()).collect();
    idx.shuffle(&mut rng);
    let n_hold =
        ((real.len() as f64 * cfg.holdout_fraction).ceil() as usize).clamp(1, real.len() - 1);
    let (hold_idx, train_idx) = idx.split_at(n_hold);
    let train = real.subset(train_idx);
    let standardizer = Standardizer::fit(&train);
    let rows: Vec<Vec<f64>> = train
        .instances()
        .iter()
        .map(|x| standardizer.apply(&x.features))
        .collect();

    let mut members = Vec::with_capacity(cfg.members);
    let mut traces = Vec::with_capacity(cfg.members);
    for m in 0..cfg.members {
        let mut member_rng = RngStream::new(cfg.seed, 10 + m as u64);
        let (pair, trace) = train_member(&rows, cfg, &mut member_rng)?;
        members.push(pair);
        traces.push(trace);
    }

    let mut ens = GanEnsemble {
        schema_version: crate::SCHEMA_VERSION.to_string(),
        label,
        feature_names: real.feature_names().to_vec(),
        members,
        noise_dim: cfg.noise_dim,
        standardizer,
        interval_lo: f64::NEG_INFINITY,
        interval_hi: f64::INFINITY,
        alpha: cfg.alpha,
        seed: cfg.seed,
        config: *cfg,
    };
    let held: Vec<f64> = hold_idx
        .iter()
        .map(|&i| ens.score(&real.instances()[i].features))
        .collect();
    let (lo, hi) = interval_from_scores(&held, cfg.alpha)?;
    ens.interval_lo = lo;
    ens.interval_hi = hi;
    Ok((ens, traces))
}

pub fn gan_fit(real: &Dataset, cfg: &GanTrainConfig) -> Result<GanEnsemble> {
    gan_fit_traced(real, cfg).map(|(e, _)| e)
}

/// `n` instances, each from a uniformly chosen member, in feature space.
/// Ids are `<label>-<i>`.
pub fn gan_sample(ens: &GanEnsemble, n: usize, seed: u64) -> Result<Vec<Instance>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = RngStream::new(seed, 0);
    Ok((0..n)
        .map(|i| {
            let m = rng.random_range(0..ens.members.len());
            let z = gaussian_vec(&mut rng, ens.noise_dim);
            let x = ens
                .standardizer
                .invert(&ens.members[m].generator.forward(&z));
            Instance::new(format!("{}-{i}", ens.label), x)
        })
        .collect())
}

/// `(score, synthetic)`: ensemble-mean discriminator output and whether it
/// falls outside the calibrated interval.
pub fn conformalized_discriminate(ens: &GanEnsemble, x: &Instance) -> (f64, bool) {
    let s = ens.score(&x.features);
    (s, !(s >= ens.interval_lo && s <= ens.interval_hi))
}
