//! Risk-aware set-valued classification.
//!
//! The crate wraps any probabilistic classifier with Mondrian (label-conditional)
//! inductive conformal prediction. It provides:
//!
//! * tabular datasets, CSV ingestion, seeded splits and Gaussian-mixture benchmarks ([`data`]);
//! * a pluggable [`ScoreModel`] contract with logistic-regression, k-NN and bagged
//!   implementations ([`classifier`]);
//! * calibration tables, class-conditional p-values, prediction sets,
//!   confidence/credibility and reject detection ([`conformal`]);
//! * naive, top-k and RAPS comparison set predictors ([`setpredictors`]);
//! * a conformalized GAN ensemble for synthesizing evolved instances ([`genmodel`]);
//! * coverage/efficiency metrics and an empirical coverage harness ([`metrics`]);
//! * perturbation-based calibrated explanations for rejected decisions ([`explain`]);
//! * CSV/JSON report writers ([`report`]).

pub mod classifier;
pub mod conformal;
pub mod data;
pub mod error;
pub mod explain;
pub mod genmodel;
pub mod linalg;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod setpredictors;

pub use classifier::{AnyModel, ScoreModel, Standardizer};
pub use conformal::{CalibrationTable, Nonconformity, PredictionRecord};
pub use data::{Dataset, Instance, LabelSet, SplitSpec};
pub use error::{Error, Result};
pub use rng::RngStream;

/// Version tag written into every JSON/CSV report.
pub const SCHEMA_VERSION: &str = "1";
