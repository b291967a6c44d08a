use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use riskcp::setpredictors::Method;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "riskcp",
    version,
    about = "Risk-aware conformal classification toolkit"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate the synthetic Gaussian benchmark.
    Synth(SynthArgs),
    /// Train a conformalized GAN ensemble on one class.
    GanTrain(GanTrainArgs),
    /// Sample rows from a trained GAN ensemble.
    GanSample(GanSampleArgs),
    /// Merge source data with generated rows into an evolved dataset.
    Evolve(EvolveArgs),
    /// Fit a classifier and its calibration table.
    Fit(FitArgs),
    /// Conformal predictions for every row of the input.
    Predict(PredictArgs),
    /// Significance sweep, set confusion and method comparison on labelled data.
    Evaluate(EvaluateArgs),
    /// Rank predictions of target labels by confidence.
    Rank(RankArgs),
    /// Calibrated explanation of a rejected decision.
    Explain(ExplainArgs),
    /// Monte-Carlo check of the coverage guarantee.
    CoverageCheck(CoverageArgs),
    /// Split, fit, calibrate, predict and report in one run.
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::GanTrain(_) => "gan-train",
            Command::GanSample(_) => "gan-sample",
            Command::Evolve(_) => "evolve",
            Command::Fit(_) => "fit",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Rank(_) => "rank",
            Command::Explain(_) => "explain",
            Command::CoverageCheck(_) => "coverage-check",
            Command::Pipeline(_) => "pipeline",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::GanTrain(a) => &a.common,
            Command::GanSample(a) => &a.common,
            Command::Evolve(a) => &a.common,
            Command::Fit(a) => &a.common,
            Command::Predict(a) => &a.common,
            Command::Evaluate(a) => &a.common,
            Command::Rank(a) => &a.common,
            Command::Explain(a) => &a.common,
            Command::CoverageCheck(a) => &a.common,
            Command::Pipeline(a) => &a.common,
        }
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("significance level must be in (0, 1), got {a}"))
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: riskcp::Error| e.to_string())
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&f) {
        Ok(f)
    } else {
        Err(format!("fraction must lie in [0, 1], got {f}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {v}"))
    }
}

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Significance level (subcommand-specific default).
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<f64>,
    /// Comma-separated significance levels.
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha)]
    pub alphas: Vec<f64>,
    /// mondrian | naive | topk | raps
    #[arg(long, default_value = "mondrian", value_parser = parse_method)]
    pub method: Method,
    /// Smoothed p-values `(# + 1)/(n + 1)` instead of `#/n`.
    #[arg(long)]
    pub smoothed: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: u64,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Flat key=value file; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rows per class, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub per_class: Vec<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 3.0)]
    pub sep: f64,
    /// Class names, comma-separated (default c0, c1, …).
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long, default_value = "synth.csv")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct GanTrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub class: String,
    /// Ensemble size.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub noise_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.25)]
    pub holdout: f64,
    #[arg(long, default_value = "gan.json")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct GanSampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Fraction of the samples kept.
    #[arg(long, default_value_t = 1.0, value_parser = parse_fraction)]
    pub keep: f64,
    #[arg(long, default_value = "samples.csv")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generated rows of the infected class (become the evolved class).
    #[arg(long)]
    pub infected: PathBuf,
    /// Generated rows of the free class.
    #[arg(long)]
    pub free: Option<PathBuf>,
    #[arg(long, default_value = "TF")]
    pub free_label: String,
    #[arg(long, default_value = "TI")]
    pub infected_label: String,
    #[arg(long, default_value = "T-EV")]
    pub evolved_label: String,
    #[arg(long, default_value = "evolved.csv")]
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelType {
    Logistic,
    Knn,
    /// Bootstrap ensemble of logistic models.
    Bagged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonconformityArg {
    InverseProbability,
    Margin,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelType::Logistic)]
    pub model_type: ModelType,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Neighbours for the knn model.
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    /// Members of the bagged model.
    #[arg(long, default_value_t = 10)]
    pub members: usize,
    #[arg(long, value_enum, default_value_t = NonconformityArg::InverseProbability)]
    pub nonconformity: NonconformityArg,
    /// RAPS regularisation weight.
    #[arg(long, default_value_t = 0.01)]
    pub raps_lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub raps_k_reg: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Calibration CSV; without it the input is split 2:1:1 and the parts are written out.
    #[arg(long)]
    pub cal: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    /// Calibration CSV, required by the naive, topk and raps methods.
    #[arg(long)]
    pub cal: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub raps_lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub raps_k_reg: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    /// Calibration CSV; enables the method comparison report.
    #[arg(long)]
    pub cal: Option<PathBuf>,
    /// Labels counted as detections (default: all but the first).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    pub raps_lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub raps_k_reg: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: Common,
    /// Labels to rank (default: all but the first).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    #[arg(long, default_value = "ranking.csv")]
    pub output: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long, default_value_t = 200)]
    pub perturbations: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_scale: f64,
    /// Locality kernel width in standardized units (default 0.75·√d).
    #[arg(long, value_parser = parse_positive)]
    pub kernel_width: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub top_j: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, default_value_t = 500)]
    pub n_cal: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    /// Training rows per trial (default: n_cal).
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Relative class frequencies, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    pub class_weights: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Labels counted as detections and ranked (default: all but the first).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
}
