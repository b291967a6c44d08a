//! Shared fixtures for the criterion benchmarks.

use riskcp::classifier::{fit_logistic, LogisticModel, TrainConfig};
use riskcp::conformal::{calibrate, CalibrationTable, Nonconformity};
use riskcp::data::{split, synth_benchmark, Dataset, SplitSpec};

pub struct Fixture {
    pub train: Dataset,
    pub cal: Dataset,
    pub test: Dataset,
    pub model: LogisticModel,
    pub table: CalibrationTable,
}

/// A calibrated 3-class logistic model on the synthetic benchmark.
pub fn fixture(n_per_class: usize, dim: usize) -> Fixture {
    let ds = synth_benchmark(&[n_per_class; 3], dim, 2.0, 7).expect("benchmark data");
    let (train, cal, test) = split(&ds, &SplitSpec::standard(7)).expect("split");
    let cfg = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let model = fit_logistic(&train, &cfg).expect("fit");
    let table = calibrate(&model, &cal, Nonconformity::InverseProbability).expect("calibrate");
    Fixture {
        train,
        cal,
        test,
        model,
        table,
    }
}
