use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use riskcp::classifier::{fit_bagged, fit_knn, fit_logistic, TrainConfig};
use riskcp::conformal::{calibrate, predict, predict_batch};
use riskcp::data::{read_rows, split, synth_benchmark_labeled, write_csv, write_rows, RawRows};
use riskcp::explain::{explain_reject, Explanation, PerturbConfig};
use riskcp::genmodel::{
    assemble_evolved, compare_marginals, gan_fit, gan_sample, select_fraction, EvolveLabels,
    GanEnsemble, GanTrainConfig, MarginalStats,
};
use riskcp::metrics::{
    alpha_sweep, confusion_of_sets, coverage_guarantee_check_with, ranking, set_confusion,
    standard_alphas, CoverageCheckConfig, CoverageReport,
};
use riskcp::report::{
    read_predictions_any, to_json_text, write_comparison, write_predictions, write_ranking,
    write_sets, write_sweep_csv, ConfusionReport, SweepReport,
};
use riskcp::setpredictors::{build_predictor, comparison_table, Method, RapsConfig};
use riskcp::{
    AnyModel, CalibrationTable, Dataset, Instance, LabelSet, Nonconformity, PredictionRecord,
    SplitSpec,
};

use crate::args::*;
use crate::run::{CliError, CliResult, Run, Stage};

const DEFAULT_ALPHA: f64 = 0.05;

pub fn run(cmd: &Command) -> CliResult<()> {
    let config = serde_json::to_value(cmd).expect("arguments serialize");
    let mut run = Run::new(cmd.name(), config, &cmd.common().output_dir)?;
    match cmd {
        Command::Synth(a) => synth(&mut run, a),
        Command::GanTrain(a) => gan_train(&mut run, a),
        Command::GanSample(a) => gan_sample_cmd(&mut run, a),
        Command::Evolve(a) => evolve(&mut run, a),
        Command::Fit(a) => fit(&mut run, a),
        Command::Predict(a) => predict_cmd(&mut run, a),
        Command::Evaluate(a) => evaluate(&mut run, a),
        Command::Rank(a) => rank(&mut run, a),
        Command::Explain(a) => explain(&mut run, a),
        Command::CoverageCheck(a) => coverage_check(&mut run, a),
        Command::Pipeline(a) => pipeline(&mut run, a),
    }?;
    run.finish()?;
    Ok(())
}

fn input<'a>(common: &'a Common, stage: &str) -> CliResult<&'a Path> {
    common
        .input
        .as_deref()
        .ok_or_else(|| CliError::usage(stage, "--input is required"))
}

fn open(path: &Path, stage: &str) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::usage(stage, format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path, label_column: &str, stage: &str) -> CliResult<Dataset> {
    riskcp::data::read_csv(open(path, stage)?, label_column).at(stage)
}

fn load_rows(
    path: &Path,
    label_column: &str,
    require_label: bool,
    stage: &str,
) -> CliResult<RawRows> {
    read_rows(open(path, stage)?, label_column, require_label).at(stage)
}

fn load_model_and_table(model: &Path, table: &Path) -> CliResult<(AnyModel, CalibrationTable)> {
    let m = AnyModel::load(model).at("load model")?;
    let t = CalibrationTable::load(table).at("load calibration")?;
    if m.label_set() != &t.label_set {
        return Err(CliError::usage(
            "load calibration",
            "calibration table labels differ from the model's",
        ));
    }
    Ok((m, t))
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    to_json_text(value).expect("report serializes").into_bytes()
}

fn csv_bytes(
    stage: &str,
    f: impl FnOnce(&mut Vec<u8>) -> riskcp::Result<()>,
) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).at(stage)?;
    Ok(buf)
}

/// Label indices named by `names`; all labels but the first when empty.
fn resolve_targets(names: &[String], labels: &LabelSet, stage: &str) -> CliResult<Vec<usize>> {
    if names.is_empty() {
        return Ok((1..labels.len()).collect());
    }
    names
        .iter()
        .map(|n| {
            labels
                .index_of(n)
                .ok_or_else(|| CliError::usage(stage, format!("unknown target label '{n}'")))
        })
        .collect()
}

fn raps_config(lambda: f64, k_reg: usize, seed: u64) -> RapsConfig {
    RapsConfig {
        lambda,
        k_reg,
        randomized: false,
        seed,
    }
}

fn synth(run: &mut Run, a: &SynthArgs) -> CliResult<()> {
    let labels: Vec<String> = if a.labels.is_empty() {
        (0..a.per_class.len()).map(|k| format!("c{k}")).collect()
    } else {
        a.labels.clone()
    };
    let ds = run.stage("generate", || {
        synth_benchmark_labeled(&labels, &a.per_class, a.dim as usize, a.sep, a.common.seed)
            .at("generate")
    })?;
    let bytes = csv_bytes("write", |w| write_csv(&ds, w, &a.common.label_column))?;
    let path = run.emit(&a.output, &bytes)?;
    println!(
        "wrote {} rows × {} features to {}",
        ds.len(),
        ds.dim(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GanDiagnostics {
    schema_version: String,
    label: String,
    real_rows: usize,
    #[serde(with = "riskcp::genmodel::extended_float")]
    interval_lo: f64,
    #[serde(with = "riskcp::genmodel::extended_float")]
    interval_hi: f64,
    marginals: Vec<MarginalStats>,
}

fn gan_train(run: &mut Run, a: &GanTrainArgs) -> CliResult<()> {
    let c = &a.common;
    let ds = run.stage("load", || {
        load_dataset(input(c, "load")?, &c.label_column, "load")
    })?;
    let class = ds
        .label_set()
        .index_of(&a.class)
        .ok_or_else(|| CliError::usage("load", format!("class '{}' not in the data", a.class)))?;
    let real = ds.filter_class(class);
    let cfg = GanTrainConfig {
        members: a.m,
        noise_dim: a.noise_dim,
        hidden: a.hidden,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        batch_size: a.batch_size,
        alpha: c.alpha.unwrap_or(0.1),
        holdout_fraction: a.holdout,
        seed: c.seed,
    };
    if a.epochs == 0 {
        run.warn("--epochs 0: generators and discriminators keep their initial weights");
    }
    let ens = run.stage("train", || gan_fit(&real, &cfg).at("train"))?;
    run.emit(&a.output, ens.to_json().at("write")?.as_bytes())?;

    let diag = run.stage("diagnostics", || {
        let synth = gan_sample(&ens, real.len(), c.seed).at("diagnostics")?;
        let labels = vec![class; synth.len()];
        let synth = Dataset::new(
            real.label_set().clone(),
            real.feature_names().to_vec(),
            synth,
            labels,
        )
        .at("diagnostics")?;
        let marginals = compare_marginals(&real, &synth).at("diagnostics")?;
        Ok(GanDiagnostics {
            schema_version: riskcp::SCHEMA_VERSION.into(),
            label: a.class.clone(),
            real_rows: real.len(),
            interval_lo: ens.interval_lo,
            interval_hi: ens.interval_hi,
            marginals,
        })
    })?;
    run.emit("gan_marginals.json", &json(&diag))?;
    let worst = diag.marginals.iter().map(|m| m.ks).fold(0.0, f64::max);
    println!(
        "trained {} members on {} rows of '{}'; interval [{:.4}, {:.4}]; max marginal KS {worst:.3}",
        cfg.members,
        real.len(),
        a.class,
        ens.interval_lo,
        ens.interval_hi
    );
    Ok(())
}

fn gan_sample_cmd(run: &mut Run, a: &GanSampleArgs) -> CliResult<()> {
    let c = &a.common;
    let ens = GanEnsemble::load(&a.model).at("load model")?;
    let kept = run.stage("sample", || {
        let all = gan_sample(&ens, a.n, c.seed).at("sample")?;
        select_fraction(&all, a.keep, c.seed).at("sample")
    })?;
    if kept.is_empty() {
        run.warn("no samples kept");
    }
    let bytes = csv_bytes("write", |w| {
        write_rows(&ens.feature_names, &kept, &ens.label, &c.label_column, w)
    })?;
    let path = run.emit(&a.output, &bytes)?;
    println!(
        "wrote {} of {} samples to {}",
        kept.len(),
        a.n,
        path.display()
    );
    Ok(())
}

fn generated(
    path: &Path,
    source: &Dataset,
    label_column: &str,
    run: &mut Run,
) -> CliResult<Vec<Instance>> {
    let rows = load_rows(path, label_column, false, "load generated")?;
    if rows.feature_names != source.feature_names() {
        run.warn(format!(
            "{}: feature names differ from the source data",
            path.display()
        ));
    }
    Ok(rows.instances)
}

fn evolve(run: &mut Run, a: &EvolveArgs) -> CliResult<()> {
    let c = &a.common;
    let source = run.stage("load", || {
        load_dataset(input(c, "load")?, &c.label_column, "load")
    })?;
    let infected = generated(&a.infected, &source, &c.label_column, run)?;
    let free = match &a.free {
        Some(p) => generated(p, &source, &c.label_column, run)?,
        None => Vec::new(),
    };
    let labels = EvolveLabels {
        free: a.free_label.clone(),
        infected: a.infected_label.clone(),
        evolved: a.evolved_label.clone(),
    };
    let ds = run.stage("assemble", || {
        assemble_evolved(&source, &infected, &free, &labels).at("assemble")
    })?;
    let bytes = csv_bytes("write", |w| write_csv(&ds, w, &c.label_column))?;
    let path = run.emit(&a.output, &bytes)?;
    let counts = ds.class_counts();
    let summary: Vec<String> = ds
        .label_set()
        .names()
        .iter()
        .zip(&counts)
        .map(|(l, n)| format!("{l}={n}"))
        .collect();
    println!(
        "wrote {} rows ({}) to {}",
        ds.len(),
        summary.join(", "),
        path.display()
    );
    Ok(())
}

fn fit_model(train: &Dataset, m: &ModelArgs, seed: u64) -> riskcp::Result<AnyModel> {
    let cfg = TrainConfig {
        learning_rate: m.learning_rate,
        epochs: m.epochs,
        l2: m.l2,
        batch_size: m.batch_size,
        seed,
    };
    Ok(match m.model_type {
        ModelType::Logistic => fit_logistic(train, &cfg)?.into(),
        ModelType::Knn => fit_knn(train, m.k)?.into(),
        ModelType::Bagged => fit_bagged(train, &cfg, m.members)?.into(),
    })
}

fn nonconformity(m: &ModelArgs) -> Nonconformity {
    match m.nonconformity {
        NonconformityArg::InverseProbability => Nonconformity::InverseProbability,
        NonconformityArg::Margin => Nonconformity::Margin,
    }
}

fn emit_split(run: &mut Run, parts: [(&str, &Dataset); 3], label_column: &str) -> CliResult<()> {
    for (name, ds) in parts {
        let bytes = csv_bytes("write", |w| write_csv(ds, w, label_column))?;
        run.emit(name, &bytes)?;
    }
    Ok(())
}

fn fit(run: &mut Run, a: &FitArgs) -> CliResult<()> {
    let c = &a.common;
    let ds = run.stage("load", || {
        load_dataset(input(c, "load")?, &c.label_column, "load")
    })?;
    let (train, cal) = match &a.cal {
        Some(p) => {
            let cal = load_dataset(p, &c.label_column, "load calibration")?;
            (
                ds.clone(),
                cal.align_to(ds.label_set()).at("load calibration")?,
            )
        }
        None => {
            let (train, cal, test) = run.stage("split", || {
                split(&ds, &SplitSpec::standard(c.seed)).at("split")
            })?;
            emit_split(
                run,
                [
                    ("train.csv", &train),
                    ("cal.csv", &cal),
                    ("test.csv", &test),
                ],
                &c.label_column,
            )?;
            (train, cal)
        }
    };
    let model = run.stage("fit", || fit_model(&train, &a.model, c.seed).at("fit"))?;
    let table = run.stage("calibrate", || {
        calibrate(&model, &cal, nonconformity(&a.model)).at("calibrate")
    })?;
    run.emit("model.json", model.to_json().at("write")?.as_bytes())?;
    run.emit("calibration.json", table.to_json().at("write")?.as_bytes())?;
    let acc = riskcp::classifier::accuracy(&model, &cal).at("fit")?;
    println!(
        "fitted {:?} model on {} rows; calibrated on {} rows (accuracy {acc:.3})",
        a.model.model_type,
        train.len(),
        cal.len()
    );
    Ok(())
}

/// Sets of a non-Mondrian predictor for each instance.
#[allow(clippy::too_many_arguments)]
fn method_sets(
    method: Method,
    model: &AnyModel,
    table: &CalibrationTable,
    cal: &Dataset,
    rows: &[Instance],
    alpha: f64,
    smoothed: bool,
    raps: RapsConfig,
) -> riskcp::Result<Vec<Vec<usize>>> {
    let p = build_predictor(method, model, table, cal, alpha, smoothed, raps)?;
    Ok(rows.par_iter().map(|x| p.predict_set(x)).collect())
}

fn predict_cmd(run: &mut Run, a: &PredictArgs) -> CliResult<()> {
    let c = &a.common;
    let alpha = c.alpha.unwrap_or(DEFAULT_ALPHA);
    let (model, table) = load_model_and_table(&a.model, &a.calibration)?;
    let rows = run.stage("load", || {
        load_rows(input(c, "load")?, &c.label_column, false, "load")
    })?;
    if c.method == Method::Mondrian {
        let records = run.stage("predict", || {
            rows.instances
                .par_iter()
                .map(|x| predict(&model, &table, x, alpha, c.smoothed))
                .collect::<riskcp::Result<Vec<_>>>()
                .at("predict")
        })?;
        let bytes = csv_bytes("write", |w| {
            write_predictions(&records, model.label_set(), w)
        })?;
        run.emit("predictions.csv", &bytes)?;
        let rejected = records.iter().filter(|r| r.rejected).count();
        println!(
            "{} predictions at α = {alpha}; {rejected} rejected",
            records.len()
        );
    } else {
        let cal_path = a.cal.as_deref().ok_or_else(|| {
            CliError::usage(
                "predict",
                format!("--cal is required for method {}", c.method.name()),
            )
        })?;
        let cal = load_dataset(cal_path, &c.label_column, "load calibration")?
            .align_to(model.label_set())
            .at("load calibration")?;
        let raps = raps_config(a.raps_lambda, a.raps_k_reg, c.seed);
        let sets = run.stage("predict", || {
            method_sets(
                c.method,
                &model,
                &table,
                &cal,
                &rows.instances,
                alpha,
                c.smoothed,
                raps,
            )
            .at("predict")
        })?;
        let ids: Vec<String> = rows.instances.iter().map(|x| x.id.clone()).collect();
        let bytes = csv_bytes("write", |w| {
            write_sets(&ids, &sets, model.label_set(), c.method.name(), alpha, w)
        })?;
        run.emit("sets.csv", &bytes)?;
        let empty = sets.iter().filter(|s| s.is_empty()).count();
        println!(
            "{} {} sets at α = {alpha}; {empty} empty",
            sets.len(),
            c.method.name()
        );
    }
    Ok(())
}

/// Confusion report at one α for the selected method.
#[allow(clippy::too_many_arguments)]
fn confusion_report(
    method: Method,
    model: &AnyModel,
    table: &CalibrationTable,
    cal: Option<&Dataset>,
    test: &Dataset,
    alpha: f64,
    smoothed: bool,
    raps: RapsConfig,
) -> CliResult<(ConfusionReport, Vec<PredictionRecord>)> {
    let records = predict_batch(model, table, test, alpha, smoothed).at("predict")?;
    let sets: Vec<Vec<usize>> = if method == Method::Mondrian {
        records.iter().map(|r| r.prediction_set.clone()).collect()
    } else {
        let cal = cal.ok_or_else(|| {
            CliError::usage(
                "confusion",
                format!("--cal is required for method {}", method.name()),
            )
        })?;
        method_sets(
            method,
            model,
            table,
            cal,
            test.instances(),
            alpha,
            smoothed,
            raps,
        )
        .at("confusion")?
    };
    let truths = test.labels();
    let confusion = if method == Method::Mondrian {
        set_confusion(&records, truths).at("confusion")?
    } else {
        confusion_of_sets(&sets, truths).at("confusion")?
    };
    let n = truths.len().max(1) as f64;
    let covered = sets
        .iter()
        .zip(truths)
        .filter(|(s, y)| s.contains(y))
        .count() as f64;
    let size = sets.iter().map(Vec::len).sum::<usize>() as f64;
    Ok((
        ConfusionReport::new(method.name(), alpha, covered / n, size / n, confusion),
        records,
    ))
}

struct Evaluation<'a> {
    model: &'a AnyModel,
    table: &'a CalibrationTable,
    cal: Option<&'a Dataset>,
    test: &'a Dataset,
    targets: Vec<usize>,
    raps: RapsConfig,
}

/// Sweep, confusion and (with calibration data) comparison reports.
fn emit_evaluation(run: &mut Run, c: &Common, ev: &Evaluation) -> CliResult<Vec<PredictionRecord>> {
    let alpha = c.alpha.unwrap_or(DEFAULT_ALPHA);
    let alphas = if c.alphas.is_empty() {
        standard_alphas()
    } else {
        c.alphas.clone()
    };
    let labels = ev.model.label_set();
    let rows = run.stage("sweep", || {
        alpha_sweep(ev.model, ev.table, ev.test, &alphas, c.smoothed).at("sweep")
    })?;
    let bytes = csv_bytes("write", |w| write_sweep_csv(&rows, labels, w))?;
    run.emit("sweep.csv", &bytes)?;
    run.emit(
        "sweep.json",
        &json(&SweepReport::new(labels, c.smoothed, rows)),
    )?;

    let (report, records) = run.stage("confusion", || {
        confusion_report(
            c.method, ev.model, ev.table, ev.cal, ev.test, alpha, c.smoothed, ev.raps,
        )
    })?;
    run.emit("confusion.json", &json(&report))?;
    println!(
        "{} at α = {alpha}: coverage {:.4}, mean set size {:.3}, {} correct / {} wrong singletons, {} multi, {} empty",
        report.method,
        report.effective_coverage,
        report.avg_set_size,
        report.confusion.correct_singleton,
        report.confusion.incorrect_singleton,
        report.confusion.inconclusive,
        report.confusion.empty
    );

    if let Some(cal) = ev.cal {
        let table = run.stage("comparison", || {
            comparison_table(
                ev.model,
                ev.table,
                cal,
                ev.test,
                &alphas,
                &ev.targets,
                c.smoothed,
                ev.raps,
            )
            .at("comparison")
        })?;
        let bytes = csv_bytes("write", |w| write_comparison(&table, w))?;
        run.emit("comparison.csv", &bytes)?;
    }
    Ok(records)
}

fn evaluate(run: &mut Run, a: &EvaluateArgs) -> CliResult<()> {
    let c = &a.common;
    let (model, table) = load_model_and_table(&a.model, &a.calibration)?;
    let test = run.stage("load", || {
        load_dataset(input(c, "load")?, &c.label_column, "load")?
            .align_to(model.label_set())
            .at("load")
    })?;
    let cal = match &a.cal {
        Some(p) => Some(
            load_dataset(p, &c.label_column, "load calibration")?
                .align_to(model.label_set())
                .at("load calibration")?,
        ),
        None => None,
    };
    let targets = resolve_targets(&a.targets, model.label_set(), "evaluate")?;
    let ev = Evaluation {
        model: &model,
        table: &table,
        cal: cal.as_ref(),
        test: &test,
        targets,
        raps: raps_config(a.raps_lambda, a.raps_k_reg, c.seed),
    };
    emit_evaluation(run, c, &ev)?;
    Ok(())
}

fn rank(run: &mut Run, a: &RankArgs) -> CliResult<()> {
    let c = &a.common;
    let (labels, records) = run.stage("load", || {
        read_predictions_any(open(input(c, "load")?, "load")?).at("load")
    })?;
    let targets = resolve_targets(&a.targets, &labels, "rank")?;
    let entries = ranking(&records, &targets);
    let bytes = csv_bytes("write", |w| write_ranking(&entries, &labels, w))?;
    let path = run.emit(&a.output, &bytes)?;
    for (i, e) in entries.iter().take(10).enumerate() {
        println!(
            "{:>3}. {} {} C={:.3} cred={:.3}",
            i + 1,
            e.id,
            labels.name(e.point),
            e.confidence,
            e.credibility
        );
    }
    println!(
        "{} ranked entries written to {}",
        entries.len(),
        path.display()
    );
    Ok(())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|ch| {
            if ch.is_ascii_alphanumeric() || ch == '-' || ch == '_' {
                ch
            } else {
                '_'
            }
        })
        .collect()
}

fn print_explanation(e: &Explanation, labels: &LabelSet) {
    let p: Vec<String> = labels
        .names()
        .iter()
        .zip(&e.p_values)
        .map(|(l, p)| format!("p_{l}={p:.3}"))
        .collect();
    println!(
        "instance {} rejected at α = {}: {}",
        e.id,
        e.alpha,
        p.join(" ")
    );
    for a in &e.attributions {
        println!(
            "  {:<12} {:<16} {:+.4} [{:+.4}, {:+.4}] {}",
            a.class,
            a.feature,
            a.weight,
            a.lo,
            a.hi,
            match a.direction {
                riskcp::explain::Direction::Toward => "toward",
                riskcp::explain::Direction::Away => "away",
            }
        );
    }
}

fn explain(run: &mut Run, a: &ExplainArgs) -> CliResult<()> {
    let c = &a.common;
    let alpha = c.alpha.unwrap_or(DEFAULT_ALPHA);
    let (model, table) = load_model_and_table(&a.model, &a.calibration)?;
    let rows = run.stage("load", || {
        load_rows(input(c, "load")?, &c.label_column, false, "load")
    })?;
    let x = rows
        .instances
        .iter()
        .find(|x| x.id == a.id)
        .ok_or_else(|| CliError {
            stage: "load".into(),
            kind: crate::run::Kind::Core(riskcp::Error::IdNotFound(a.id.clone())),
        })?;
    let stds = feature_stds(&rows.instances);
    let cfg = PerturbConfig {
        n_perturbations: a.perturbations,
        sigma_scale: a.sigma_scale,
        kernel_width: a.kernel_width,
        top_j: a.top_j,
        seed: c.seed,
    };
    let e = run.stage("explain", || {
        explain_reject(
            &model,
            &table,
            x,
            alpha,
            c.smoothed,
            &stds,
            &rows.feature_names,
            &cfg,
        )
        .at("explain")
    })?;
    run.emit(&format!("explanation_{}.json", file_stem(&a.id)), &json(&e))?;
    print_explanation(&e, model.label_set());
    Ok(())
}

/// Population standard deviation per feature; constant features get 1.
fn feature_stds(rows: &[Instance]) -> Vec<f64> {
    let d = rows.first().map_or(0, Instance::dim);
    let n = rows.len().max(1) as f64;
    (0..d)
        .map(|j| {
            let mean = rows.iter().map(|x| x.features[j]).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|x| (x.features[j] - mean).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CoverageFile {
    schema_version: String,
    reports: Vec<CoverageReport>,
}

fn coverage_check(run: &mut Run, a: &CoverageArgs) -> CliResult<()> {
    let c = &a.common;
    let alphas = match (c.alphas.is_empty(), c.alpha) {
        (false, _) => c.alphas.clone(),
        (true, Some(al)) => vec![al],
        (true, None) => vec![0.05, 0.1, 0.2],
    };
    let mut reports = Vec::new();
    for &alpha in &alphas {
        let cfg = CoverageCheckConfig {
            n_trials: a.trials,
            n_cal: a.n_cal,
            n_test: a.n_test,
            n_train: a.n_train.unwrap_or(a.n_cal),
            alpha,
            seed: c.seed,
            class_weights: a.class_weights.clone(),
            dim: a.dim,
            separation: a.separation,
        };
        let r = run.stage(&format!("alpha={alpha}"), || {
            coverage_guarantee_check_with(&cfg).at("coverage")
        })?;
        let per_class: Vec<String> = r.class_coverage.iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "α = {alpha}: coverage {:.4} (bound {:.4}) per class [{}] {}",
            r.coverage,
            r.bound,
            per_class.join(", "),
            if r.pass { "PASS" } else { "FAIL" }
        );
        if !r.pass {
            run.warn(format!(
                "coverage {:.4} below bound {:.4} at α = {alpha}",
                r.coverage, r.bound
            ));
        }
        reports.push(r);
    }
    run.emit(
        "coverage.json",
        &json(&CoverageFile {
            schema_version: riskcp::SCHEMA_VERSION.into(),
            reports,
        }),
    )?;
    Ok(())
}

fn pipeline(run: &mut Run, a: &PipelineArgs) -> CliResult<()> {
    let c = &a.common;
    let ds = run.stage("load", || {
        load_dataset(input(c, "load")?, &c.label_column, "load")
    })?;
    let (train, cal, test) = run.stage("split", || {
        split(&ds, &SplitSpec::standard(c.seed)).at("split")
    })?;
    let model = run.stage("fit", || fit_model(&train, &a.model, c.seed).at("fit"))?;
    let table = run.stage("calibrate", || {
        calibrate(&model, &cal, nonconformity(&a.model)).at("calibrate")
    })?;
    run.emit("model.json", model.to_json().at("write")?.as_bytes())?;
    run.emit("calibration.json", table.to_json().at("write")?.as_bytes())?;

    let targets = resolve_targets(&a.targets, model.label_set(), "pipeline")?;
    let ev = Evaluation {
        model: &model,
        table: &table,
        cal: Some(&cal),
        test: &test,
        targets: targets.clone(),
        raps: raps_config(a.model.raps_lambda, a.model.raps_k_reg, c.seed),
    };
    let records = emit_evaluation(run, c, &ev)?;
    let bytes = csv_bytes("write", |w| {
        write_predictions(&records, model.label_set(), w)
    })?;
    run.emit("predictions.csv", &bytes)?;
    let entries = ranking(&records, &targets);
    let bytes = csv_bytes("write", |w| write_ranking(&entries, model.label_set(), w))?;
    run.emit("ranking.csv", &bytes)?;
    println!(
        "split {}/{}/{}; {} ranked detections; reports in {}",
        train.len(),
        cal.len(),
        test.len(),
        entries.len(),
        run.out_dir.display()
    );
    Ok(())
}
