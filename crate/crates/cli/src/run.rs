use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use riskcp::classifier::sha256_hex;
use serde::Serialize;

use riskcp::SCHEMA_VERSION;

/// Error tagged with the stage that produced it.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub kind: Kind,
}

#[derive(Debug)]
pub enum Kind {
    Core(riskcp::Error),
    Usage(String),
}

impl CliError {
    pub fn usage(stage: &str, msg: impl Into<String>) -> Self {
        Self {
            stage: stage.to_string(),
            kind: Kind::Usage(msg.into()),
        }
    }

    /// 1 for internal (numerical) failures, 2 for bad input.
    pub fn exit_code(&self) -> u8 {
        match &self.kind {
            Kind::Core(e) if e.is_internal() => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Core(e) => write!(f, "{}: {e}", self.stage),
            Kind::Usage(m) => write!(f, "{}: {m}", self.stage),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Stage<T> {
    fn at(self, stage: &str) -> CliResult<T>;
}

impl<T> Stage<T> for riskcp::Result<T> {
    fn at(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError {
            stage: stage.to_string(),
            kind: Kind::Core(e),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Serialize)]
pub struct Output {
    pub path: PathBuf,
    pub sha256: String,
}

/// Run metadata. Timings vary between runs; the listed outputs do not.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<Output>,
    pub warnings: Vec<String>,
}

pub struct Run {
    pub report: RunReport,
    pub out_dir: PathBuf,
}

impl Run {
    pub fn new(command: &str, config: serde_json::Value, out_dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::usage("setup", format!("{}: {e}", out_dir.display())))?;
        Ok(Self {
            report: RunReport {
                schema_version: SCHEMA_VERSION.into(),
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config,
                timings: Vec::new(),
                outputs: Vec::new(),
                warnings: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
        })
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f();
        self.report.timings.push(StageTiming {
            stage: name.into(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.report.warnings.push(msg);
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Writes an artifact into the output directory and records its hash.
    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::usage("write", format!("{}: {e}", path.display())))?;
        self.report.outputs.push(Output {
            path: path.clone(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self) -> CliResult<RunReport> {
        let name = format!("{}.run.json", self.report.command);
        let path = self.path(&name);
        let text = serde_json::to_string_pretty(&self.report).expect("run report serializes");
        fs::write(&path, text + "\n")
            .map_err(|e| CliError::usage("write", format!("{}: {e}", path.display())))?;
        Ok(self.report)
    }
}
