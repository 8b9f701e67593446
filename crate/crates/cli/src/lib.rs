//! Orchestration behind the `detect` binary: read a scenario, run one
//! command, write outputs plus a manifest.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 runtime failure, 4 not converged.

use std::fs;
use std::path::{Path, PathBuf};

use detect_core::scenario::{scenario_from_value, Scenario, ScenarioError};
use detect_core::seed::digest_hex;
use serde::Serialize;
use thiserror::Error;

pub mod commands;
pub mod output;

use output::{OutputDir, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Kinetic,
    Invert,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Kinetic => "kinetic",
            Command::Invert => "invert",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub ensemble: Option<usize>,
    /// JSON merge patch applied to the scenario before validation.
    pub patch: Option<PathBuf>,
    /// Worker cap; `None` reads `DETECT_THREADS`.
    pub threads: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Core(#[from] detect_core::Error),
    #[error("{message}")]
    NotConverged { code: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn core(e: impl Into<detect_core::Error>) -> Self {
        CliError::Core(e.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Scenario(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Io { .. } | CliError::Core(_) => 3,
            CliError::NotConverged { .. } => 4,
        }
    }

    pub fn code(&self) -> String {
        match self {
            CliError::Usage(_) => "cli.usage".into(),
            CliError::Io { .. } => "cli.io".into(),
            CliError::Scenario(e) => e.code(),
            CliError::Core(e) => e.code(),
            CliError::NotConverged { code, .. } => code.clone(),
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (field, line, column) = match self {
            CliError::Scenario(ScenarioError::Validation { field, .. }) => (Some(field.clone()), None, None),
            CliError::Scenario(ScenarioError::Syntax { line, column, .. }) => (None, Some(*line), Some(*column)),
            _ => (None, None, None),
        };
        ErrorReport {
            code: self.code(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            field,
            line,
            column,
        }
    }
}

/// Body of `error.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub code: String,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

/// What a command hands back once its files are written.
pub struct Outcome {
    pub seeds: Vec<u64>,
    /// Outputs are complete but a convergence check failed.
    pub not_converged: Option<CliError>,
}

pub struct Loaded {
    pub scenario: Scenario,
    /// Scenario document after the patch, for commands that rewrite it.
    pub document: serde_json::Value,
    pub scenario_sha256: String,
    pub patch_sha256: Option<String>,
}

pub fn load(opts: &RunOptions) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(&opts.scenario).map_err(|e| CliError::io(&opts.scenario, e))?;
    let scenario_sha256 = digest_hex(text.as_bytes());
    let mut document: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let mut patch_sha256 = None;
    if let Some(path) = &opts.patch {
        let patch_text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        patch_sha256 = Some(digest_hex(patch_text.as_bytes()));
        let patch: serde_json::Value = serde_json::from_str(&patch_text)
            .map_err(|e| CliError::Usage(format!("{}: invalid patch: {e}", path.display())))?;
        json_patch::merge(&mut document, &patch);
    }
    let mut scenario = scenario_from_value(document.clone())?;
    if let Some(seed) = opts.seed {
        scenario.spec.seed = seed;
        document["seed"] = seed.into();
    }
    if let Some(n) = opts.ensemble {
        if n == 0 {
            return Err(CliError::Usage("--ensemble must be at least 1".into()));
        }
        scenario.spec.ensemble_size = n;
        document["ensemble_size"] = n.into();
    }
    Ok(Loaded {
        scenario,
        document,
        scenario_sha256,
        patch_sha256,
    })
}

fn thread_cap(opts: &RunOptions) -> Result<Option<usize>, CliError> {
    if let Some(n) = opts.threads {
        return Ok(Some(n));
    }
    match std::env::var("DETECT_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("DETECT_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

/// Runs one command end to end. On failure `error.json` and the manifest are
/// still written when the output directory is usable.
pub fn run(opts: &RunOptions) -> Result<(), CliError> {
    let mut out = OutputDir::create(&opts.out)?;
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command: opts.command.name().to_string(),
        // Recorded up front so failed runs still identify their input.
        scenario_sha256: fs::read(&opts.scenario).map(|b| digest_hex(&b)).unwrap_or_default(),
        patch_sha256: None,
        master_seed: 0,
        seeds: Vec::new(),
        status: "ok".into(),
        files: Vec::new(),
    };
    let result = thread_cap(opts).and_then(|cap| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cap {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            let loaded = load(opts)?;
            manifest.patch_sha256 = loaded.patch_sha256.clone();
            manifest.master_seed = loaded.scenario.seed();
            match opts.command {
                Command::Simulate => commands::simulate::run(&loaded, &mut out),
                Command::Kinetic => commands::kinetic::run(&loaded, &mut out),
                Command::Invert => commands::invert::run(&loaded, &mut out),
                Command::Check => commands::check::run(&loaded, &mut out),
            }
        })
    });
    let err = match result {
        Ok(outcome) => {
            manifest.seeds = outcome.seeds;
            outcome.not_converged
        }
        Err(e) => Some(e),
    };
    if let Some(e) = &err {
        manifest.status = e.code();
        out.write_json("error.json", &e.report())?;
    }
    out.finish(manifest)?;
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
