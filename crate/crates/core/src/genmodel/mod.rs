//! Conformalized GAN synthesis of evolved instances.
//!
//! An ensemble of `M` generator/discriminator pairs is trained on bootstrap
//! resamples of one class. Real rows held out from training are scored by the
//! ensemble-mean discriminator, and a two-sided split-conformal interval over
//! those scores gates the final real/synthetic decision: a score outside the
//! interval is flagged synthetic. The literal per-instance conformal
//! predictors of the original algorithm are collapsed into this single
//! calibrated interval; the bootstrap ensemble and the outside-interval
//! decision rule are kept.

mod evolve;
mod gan;
mod mlp;

pub use evolve::{
    assemble_evolved, compare_marginals, ks_statistic, select_fraction, EvolveLabels, MarginalStats,
};
pub use gan::{
    conformalized_discriminate, gan_fit, gan_fit_traced, gan_sample, interval_from_scores,
    GanEnsemble, GanPair, GanTrainConfig, MemberTrace,
};
pub use mlp::{Activation, Layer, LayerGrad, Mlp, MlpCache, MomentumSgd};

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("bad float '{other}'"))),
            },
        }
    }
}
