//! Helpers for driving the `riskcp` binary from tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

pub fn riskcp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskcp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs and insists on success, returning stdout.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = riskcp(dir, args);
    assert!(
        out.status.success(),
        "riskcp {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// CSV data rows (header excluded).
pub fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

/// Two classes separated only along `f2`; the other features are noise.
/// Writes `train.csv`, `cal.csv` and `probe.csv` (holding an ambiguous row
/// `amb` at the class midpoint and a clear row `clear`).
pub fn write_planted(dir: &Path, seed: u64) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut sample = |n: usize, tag: &str| {
        let mut text = String::from("id,f0,f1,f2,f3,label\n");
        for i in 0..n {
            for (label, centre) in [("TF", 2.0), ("TI", -2.0)] {
                let f: Vec<String> = (0..4)
                    .map(|j| {
                        let e: f64 = g.sample(&mut rng);
                        if j == 2 { centre + e } else { e }.to_string()
                    })
                    .collect();
                text.push_str(&format!("{tag}{label}{i},{},{label}\n", f.join(",")));
            }
        }
        text
    };
    fs::write(dir.join("train.csv"), sample(300, "t")).unwrap();
    fs::write(dir.join("cal.csv"), sample(200, "c")).unwrap();
    let mut probe = sample(50, "p");
    probe.push_str("amb,0,0,0,0,TF\nclear,0,0,3.5,0,TF\n");
    fs::write(dir.join("probe.csv"), probe).unwrap();
}

/// Emitted files of one step, by file name.
pub type Payload = BTreeMap<String, Vec<u8>>;

/// Reads every output listed in `<command>.run.json` and checks its recorded hash.
pub fn payload(step_dir: &Path, command: &str) -> Result<Payload, String> {
    let report = read_json(&step_dir.join(format!("{command}.run.json")));
    let mut out = Payload::new();
    for o in report["outputs"]
        .as_array()
        .ok_or("run report lists no outputs")?
    {
        let path = Path::new(o["path"].as_str().unwrap());
        let bytes =
            fs::read(step_dir.join(path.file_name().unwrap())).map_err(|e| e.to_string())?;
        let sha = riskcp::classifier::sha256_hex(&bytes);
        if sha != o["sha256"].as_str().unwrap() {
            return Err(format!("{}: hash differs from run report", path.display()));
        }
        out.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            bytes,
        );
    }
    Ok(out)
}

/// One invocation of every subcommand, each writing into its own directory
/// under `root`. Returns the payload of every step.
pub fn run_every_subcommand(root: &Path) -> Result<Vec<(String, Payload)>, String> {
    write_planted(root, 5);
    let steps: Vec<(&str, &str, Vec<&str>)> = vec![
        (
            "synth",
            "synth",
            vec![
                "--per-class",
                "300,150,100",
                "--dim",
                "4",
                "--sep",
                "2.5",
                "--labels",
                "TF,TI,T-EV",
                "--seed",
                "3",
                "--output",
                "data.csv",
            ],
        ),
        (
            "gan",
            "gan-train",
            vec![
                "--input",
                "../synth/data.csv",
                "--class",
                "TI",
                "--m",
                "2",
                "--epochs",
                "15",
                "--batch-size",
                "32",
                "--seed",
                "1",
            ],
        ),
        (
            "sample",
            "gan-sample",
            vec![
                "--model",
                "../gan/gan.json",
                "--n",
                "500",
                "--keep",
                "0.2",
                "--seed",
                "2",
            ],
        ),
        (
            "evolve",
            "evolve",
            vec![
                "--input",
                "../synth/data.csv",
                "--infected",
                "../sample/samples.csv",
            ],
        ),
        (
            "fit",
            "fit",
            vec![
                "--input",
                "../evolve/evolved.csv",
                "--epochs",
                "100",
                "--seed",
                "4",
            ],
        ),
        (
            "predict",
            "predict",
            vec![
                "--model",
                "../fit/model.json",
                "--calibration",
                "../fit/calibration.json",
                "--input",
                "../fit/test.csv",
                "--alpha",
                "0.1",
                "--smoothed",
            ],
        ),
        (
            "predict-raps",
            "predict",
            vec![
                "--model",
                "../fit/model.json",
                "--calibration",
                "../fit/calibration.json",
                "--cal",
                "../fit/cal.csv",
                "--input",
                "../fit/test.csv",
                "--method",
                "raps",
            ],
        ),
        (
            "evaluate",
            "evaluate",
            vec![
                "--model",
                "../fit/model.json",
                "--calibration",
                "../fit/calibration.json",
                "--cal",
                "../fit/cal.csv",
                "--input",
                "../fit/test.csv",
                "--targets",
                "TI,T-EV",
            ],
        ),
        (
            "rank",
            "rank",
            vec!["--input", "../predict/predictions.csv", "--targets", "T-EV"],
        ),
        (
            "fit-planted",
            "fit",
            vec![
                "--input",
                "../train.csv",
                "--cal",
                "../cal.csv",
                "--epochs",
                "200",
            ],
        ),
        (
            "explain",
            "explain",
            vec![
                "--model",
                "../fit-planted/model.json",
                "--calibration",
                "../fit-planted/calibration.json",
                "--input",
                "../probe.csv",
                "--id",
                "amb",
                "--alpha",
                "0.1",
                "--seed",
                "6",
            ],
        ),
        (
            "coverage",
            "coverage-check",
            vec![
                "--trials", "3", "--n-cal", "150", "--n-test", "200", "--alphas", "0.1,0.2",
                "--seed", "8",
            ],
        ),
        (
            "pipeline",
            "pipeline",
            vec![
                "--input",
                "../synth/data.csv",
                "--epochs",
                "100",
                "--alpha",
                "0.1",
                "--smoothed",
                "--seed",
                "2",
            ],
        ),
    ];
    let mut payloads = Vec::new();
    for (dir, command, args) in steps {
        let step_dir = root.join(dir);
        fs::create_dir_all(&step_dir).unwrap();
        let mut full = vec![command];
        full.extend(args.iter().copied());
        let out = riskcp(&step_dir, &full);
        if !out.status.success() {
            return Err(format!(
                "{dir}: exit {:?}: {}",
                out.status.code(),
                stderr(&out)
            ));
        }
        payloads.push((dir.to_string(), payload(&step_dir, command)?));
    }
    Ok(payloads)
}

/// Runs the whole suite twice and compares every emitted byte.
pub fn check_determinism(a: &Path, b: &Path) -> Result<usize, String> {
    let first = run_every_subcommand(a)?;
    let second = run_every_subcommand(b)?;
    let mut files = 0;
    for ((step, pa), (_, pb)) in first.iter().zip(&second) {
        if pa.is_empty() {
            return Err(format!("{step}: no outputs"));
        }
        if pa != pb {
            let differing: Vec<&String> = pa.keys().filter(|k| pa.get(*k) != pb.get(*k)).collect();
            return Err(format!("{step}: payload differs: {differing:?}"));
        }
        files += pa.len();
    }
    Ok(files)
}
