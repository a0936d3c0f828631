//! Config-driven runner: parses an experiment file, runs it, and writes
//! tables, field dumps and a manifest into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod config;
pub mod expr;
pub mod io;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use config::{parse_config, ConfigError, ExperimentConfig, Kind};
use io::{sha256_hex, ErrorRecord, Manifest};
use run::Artifacts;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("solver: {0}")]
    Solver(#[from] homlab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Solver(_) => "solver",
            RunError::Io(_) => "io",
            RunError::Verification(_) => "verification",
        }
    }

    fn violations(&self) -> Vec<String> {
        match self {
            RunError::Config(c) => c.violations.clone(),
            RunError::Verification(v) => v.lines().map(String::from).collect(),
            _ => Vec::new(),
        }
    }
}

fn dispatch(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts, RunError> {
    match cfg.kind {
        Kind::Cell => run::run_cell(cfg, out),
        Kind::Limit => run::run_limit(cfg, out),
        Kind::Nse => run::run_nse(cfg, out),
        Kind::Rate => run::run_rate(cfg, out),
        Kind::Check => {
            let rows = check::run_checks(cfg);
            let mut art = Artifacts::default();
            check::check_table(&rows).write(&out.join("check.csv"))?;
            art.outputs.push("check.csv".into());
            for r in &rows {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!("{status} {}: {} = {:.3e}", r.module, r.check, r.value);
            }
            art.failures = rows.iter().filter(|r| !r.passed()).map(|r| format!("{}: {}", r.module, r.check)).collect();
            Ok(art)
        }
    }
}

fn manifest(cfg: &ExperimentConfig, text: &str, art: &Artifacts) -> Manifest {
    Manifest {
        command: cfg.kind.name().into(),
        program_version: env!("CARGO_PKG_VERSION").into(),
        library_version: homlab::VERSION.into(),
        config_sha256: sha256_hex(text.as_bytes()),
        config: serde_json::to_value(&cfg.echo).unwrap_or(serde_json::Value::Null),
        seed: cfg.seed,
        hypotheses: run::hypotheses_label(cfg.hypotheses).into(),
        warnings: cfg.warnings.clone(),
        grids: art.grids.clone(),
        outputs: art.outputs.clone(),
    }
}

fn execute_inner(kind: Kind, config_path: &Path, out: Option<PathBuf>, jobs: usize) -> (Result<(), RunError>, Option<PathBuf>) {
    let cfg = match parse_config(config_path, kind) {
        Ok(c) => c,
        Err(e) => return (Err(e.into()), out),
    };
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    let out = match out.or_else(|| cfg.output.as_ref().map(PathBuf::from)) {
        Some(o) => o,
        None => {
            let e = ConfigError { violations: vec!["no output directory: pass --out or set io.output".into()] };
            return (Err(e.into()), None);
        }
    };
    if jobs == 0 {
        let e = ConfigError { violations: vec!["--jobs must be at least 1".into()] };
        return (Err(e.into()), Some(out));
    }
    let result = (|| {
        fs::create_dir_all(&out)?;
        let text = fs::read_to_string(config_path)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| RunError::Io(std::io::Error::other(e.to_string())))?;
        let art = pool.install(|| dispatch(&cfg, &out))?;
        manifest(&cfg, &text, &art).write(&out)?;
        if art.failures.is_empty() {
            Ok(())
        } else {
            Err(RunError::Verification(art.failures.join("\n")))
        }
    })();
    (result, Some(out))
}

/// Runs one subcommand and returns the process exit code.
pub fn execute(kind: Kind, config_path: &Path, out: Option<PathBuf>, jobs: usize) -> i32 {
    let (result, out) = execute_inner(kind, config_path, out, jobs);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if let Some(dir) = out {
                let record = ErrorRecord { exit_code: code, kind: e.kind().into(), message: e.to_string(), violations: e.violations() };
                if let Err(w) = record.write(&dir) {
                    eprintln!("error: cannot write error.json: {w}");
                }
            }
            code
        }
    }
}
