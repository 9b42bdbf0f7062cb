//! The `run` command: config in, `result.csv`, `result.json` and
//! `manifest.json` out.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use rydsim::protocols::ExperimentResult;
use rydsim::seqfile::{self, ConfigErrors, ExperimentConfig, Strictness};

use crate::{print_error, GlobalOpts, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("bad override `{0}`: expected KEY=VALUE")]
    Override(String),
    #[error("invalid config: {0}")]
    Config(#[from] ConfigErrors),
    #[error("thread pool: {0}")]
    Threads(String),
    #[error(transparent)]
    Simulation(#[from] rydsim::Error),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Read { .. } | RunError::Override(_) | RunError::Config(_) | RunError::Threads(_) => EXIT_VALIDATION,
            RunError::Simulation(e) if !e.is_numeric() => EXIT_VALIDATION,
            RunError::Simulation(_) | RunError::Write { .. } => EXIT_NUMERIC,
        }
    }

    /// Structured form for standard error.
    pub fn to_json(&self) -> Vec<Value> {
        match self {
            RunError::Config(errors) => errors
                .0
                .iter()
                .map(|e| {
                    let mut v = json!({ "class": e.class(), "location": e.location(), "message": e.to_string() });
                    if let seqfile::ConfigError::Schema { suggestion: Some(s), .. } = e {
                        v["suggestion"] = json!(s);
                    }
                    v
                })
                .collect(),
            RunError::Read { path, .. } => vec![json!({ "class": "io", "location": path, "message": self.to_string() })],
            RunError::Write { path, .. } => vec![json!({ "class": "io", "location": path, "message": self.to_string() })],
            RunError::Override(_) => vec![json!({ "class": "usage", "message": self.to_string() })],
            RunError::Threads(_) => vec![json!({ "class": "usage", "message": self.to_string() })],
            RunError::Simulation(e) => {
                let class = if e.is_numeric() { "numeric" } else { "domain" };
                vec![json!({ "class": class, "message": e.to_string() })]
            }
        }
    }
}

/// Reproduction record written next to the results.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub protocol: String,
    pub seed: u64,
    pub shots: usize,
    pub threads: Option<usize>,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    /// SHA-256 of each output file.
    pub outputs: Vec<OutputDigest>,
    pub config: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Files produced by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub result: ExperimentResult,
    pub manifest: RunManifest,
}

fn split_override(raw: &str) -> Result<(String, String), RunError> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(RunError::Override(raw.to_string())),
    }
}

/// Reads a config and applies `--set`, `--seed`, `--shots` and `--out`.
pub fn load_config(path: &Path, opts: &GlobalOpts) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut overrides = opts.set.iter().map(|s| split_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = opts.seed {
        overrides.push(("readout.seed".into(), seed.to_string()));
    }
    if let Some(shots) = opts.shots {
        overrides.push(("readout.shots".into(), shots.to_string()));
    }
    if let Some(out) = &opts.out {
        overrides.push(("output.dir".into(), Value::String(out.display().to_string()).to_string()));
    }
    let strictness = if opts.lax { Strictness::Lax } else { Strictness::Strict };
    Ok(seqfile::parse_with(&text, &overrides, strictness)?)
}

fn write(path: &Path, contents: &str) -> Result<String, RunError> {
    fs::write(path, contents).map_err(|e| RunError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(format!("{:x}", Sha256::digest(contents.as_bytes())))
}

/// Runs `config`, writing into its output directory (default `out`).
pub fn execute(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, RunError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let setup = config.setup()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError::Threads(e.to_string()))?;
    let result = pool.install(|| config.protocol.run(&setup))?;

    let dir = PathBuf::from(config.output.dir.clone().unwrap_or_else(|| "out".to_string()));
    fs::create_dir_all(&dir).map_err(|e| RunError::Write {
        path: dir.clone(),
        message: e.to_string(),
    })?;
    let config_value: Value = serde_json::from_str(&seqfile::echo(config)).expect("echo is valid JSON");
    let mut result_doc = serde_json::to_value(&result).expect("results serialize");
    result_doc["config"] = config_value.clone();
    let mut result_json = serde_json::to_string_pretty(&result_doc).expect("results serialize");
    result_json.push('\n');

    let outputs = vec![
        OutputDigest {
            file: "result.csv".into(),
            sha256: write(&dir.join("result.csv"), &result.to_csv())?,
        },
        OutputDigest {
            file: "result.json".into(),
            sha256: write(&dir.join("result.json"), &result_json)?,
        },
    ];
    let manifest = RunManifest {
        tool: "rydsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        protocol: result.protocol.clone(),
        seed: config.readout.seed,
        shots: config.readout.shots,
        threads,
        started_unix_s: started,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        outputs,
        config: config_value,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_json.push('\n');
    write(&dir.join("manifest.json"), &manifest_json)?;
    Ok(RunOutput { dir, result, manifest })
}

pub(crate) fn run_cli(path: &Path, opts: &GlobalOpts) -> i32 {
    match load_config(path, opts).and_then(|c| execute(&c, opts.threads)) {
        Ok(out) => {
            println!(
                "{}: {} rows written to {}",
                out.result.protocol,
                out.result.rows(),
                out.dir.display()
            );
            for flag in &out.result.flags {
                println!("warning: {flag}");
            }
            EXIT_OK
        }
        Err(e) => {
            let code = e.exit_code();
            print_error(code, e.to_json());
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_syntax() {
        assert_eq!(split_override("a.b=1").unwrap(), ("a.b".into(), "1".into()));
        assert_eq!(split_override("a=x=y").unwrap(), ("a".into(), "x=y".into()));
        assert!(split_override("novalue").is_err());
        assert!(split_override("=3").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        let read = RunError::Read {
            path: "x".into(),
            message: "gone".into(),
        };
        assert_eq!(read.exit_code(), EXIT_VALIDATION);
        assert_eq!(RunError::Simulation(rydsim::Error::Numeric("nan".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(RunError::Simulation(rydsim::Error::Domain("bad".into())).exit_code(), EXIT_VALIDATION);
    }
}
