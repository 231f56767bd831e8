//! Config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
//! 3 numerical failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::Error;
use crate::function_space::sidecar_path;
use config::{ExperimentConfig, Needs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "flrwn", version, about = "Functional linear regression and white-noise experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample designs, the test function and regression responses.
    Simulate(Common),
    /// Map regression data to white-noise coefficients and back.
    Transform(Common),
    /// Fit the configured estimator once per sample size.
    Estimate(Common),
    /// Monte Carlo MISE study with rate regression and sharp-constant ratios.
    Risk(Common),
    /// Two-route distributional test battery and the Δ study.
    Equivalence(Common),
    /// Merge result tables and draw SVG plots.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a run, with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: String) -> Self {
        Self {
            code: EXIT_CONFIG,
            message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::DegenerateDesign { .. } => EXIT_NUMERICAL,
            Error::Config(_) | Error::Spec(_) | Error::InvalidArgument(_) | Error::Resolution { .. } => EXIT_CONFIG,
            Error::Dimension { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_FAILURE,
        };
        let mut message = e.to_string();
        if let Error::DegenerateDesign { n, .. } = e {
            message.push_str(&format!(
                "; the exact transform needs rank-{n} designs (set [design] truncation >= {n} or use the integrated-gaussian design)"
            ));
        }
        Self { code, message }
    }
}

/// Files written by a run. They are staged in a scratch directory and moved
/// into place only when the run succeeds, so a failed run leaves earlier
/// results untouched.
pub(crate) struct Outputs {
    dir: PathBuf,
    staging: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    command: &'static str,
    hash: String,
    seed: u64,
}

impl Outputs {
    fn new(dir: PathBuf, command: &'static str, config: &ExperimentConfig) -> Result<Self, Error> {
        let created_dir = !dir.exists();
        let staging = dir.join(format!(".staging-{command}"));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        std::fs::create_dir_all(&staging)?;
        Ok(Self {
            dir,
            staging,
            created_dir,
            written: Vec::new(),
            command,
            hash: config.hash(),
            seed: config.seed,
        })
    }

    pub(crate) fn dir(&self) -> &Path {
        &self.dir
    }

    /// Staging path for the artifact `name`.
    pub(crate) fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(PathBuf::from(name));
        self.staging.join(name)
    }

    /// Provenance record: command, config hash and seed, plus `extra`.
    pub(crate) fn meta(&self, extra: serde_json::Value) -> serde_json::Value {
        let mut meta = json!({
            "command": self.command,
            "config_sha256": self.hash,
            "seed": self.seed,
        });
        if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        meta
    }

    /// Writes the provenance sidecar `<file>.json` next to a CSV artifact.
    pub(crate) fn sidecar(&mut self, path: &Path, extra: serde_json::Value) -> Result<(), Error> {
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.meta(extra))? + "\n";
        std::fs::write(&side, text)?;
        if let Some(name) = side.file_name() {
            self.written.push(PathBuf::from(name));
        }
        Ok(())
    }

    fn commit(self) -> Result<(), Error> {
        for name in &self.written {
            let from = self.staging.join(name);
            if from.exists() {
                std::fs::rename(&from, self.dir.join(name))?;
            }
        }
        std::fs::remove_dir_all(&self.staging)?;
        Ok(())
    }

    fn discard(self) {
        let _ = std::fs::remove_dir_all(&self.staging);
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, needs, name) = match &cli.command {
        Command::Simulate(c) => (c, Needs::Simulate, "simulate"),
        Command::Transform(c) => (c, Needs::Transform, "transform"),
        Command::Estimate(c) => (c, Needs::Estimate, "estimate"),
        Command::Risk(c) => (c, Needs::Risk, "risk"),
        Command::Equivalence(c) => (c, Needs::Equivalence, "equivalence"),
        Command::Report(c) => (c, Needs::Report, "report"),
    };
    let source = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::config(format!("{}: {e}", common.config.display())))?;
    let mut config = ExperimentConfig::parse(&source)
        .map_err(|e| Failure::config(config::render_parse_error(&common.config, &e)))?;
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(o) = &common.out {
        config.output_dir = o.clone();
    }
    let spec = config
        .validate(needs)
        .map_err(|e| Failure::config(e.render(&common.config, &source)))?;
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Failure::config("--threads must be positive".into()));
        }
        // A pool built earlier in this process stays in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut out = Outputs::new(config.output_dir.clone(), name, &config)?;
    let result = match needs {
        Needs::Simulate => commands::simulate(&config, &spec, &mut out),
        Needs::Transform => commands::transform(&config, &spec, &mut out),
        Needs::Estimate => commands::estimate(&config, &spec, &mut out),
        Needs::Risk => commands::risk(&config, &spec, &mut out),
        Needs::Equivalence => commands::equivalence(&config, &spec, &mut out),
        Needs::Report => commands::report(&config, &mut out),
    };
    match result {
        Ok(summary) => {
            out.commit()?;
            println!("{summary}");
            Ok(())
        }
        Err(e) => {
            out.discard();
            Err(e.into())
        }
    }
}
