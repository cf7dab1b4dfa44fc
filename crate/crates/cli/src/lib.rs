//! Experiment runner for `tvqueue`: reads a configuration document, runs
//! one subcommand, and writes CSV/JSON outputs plus a `manifest.json` that
//! indexes them and embeds the resolved configuration for replay.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Args, Parser, Subcommand};
use commands::{CommandError, Report};
use config::{ConfigError, ExperimentConfig, Overrides};
use output::{write_manifest, Artifacts, RunManifest};
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use tvqueue::RunKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;
pub const EXIT_CAPS: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tvqueue", version, about = "Simulate time-varying queues with workload-based balking and check their stochastic bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Busy periods, cycles or horizon runs: samples.csv + summary.json
    Simulate,
    /// One-sided dominance suites: paired.csv + verdicts
    Dominance,
    /// Decompounding and geometric-sum bounds: bound.csv
    Bound,
    /// Tail-ratio trend checks: tail.csv
    Tail,
    /// Stability verdict, optionally with a workload growth check
    Stability,
    /// Regenerative ratio against the horizon time average
    SteadyState,
    /// Moments of the served count per cycle
    Moments,
    /// Built-in oracle suite
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Dominance => "dominance",
            Command::Bound => "bound",
            Command::Tail => "tail",
            Command::Stability => "stability",
            Command::SteadyState => "steady-state",
            Command::Moments => "moments",
            Command::Validate => "validate",
        }
    }

    fn run_kind(self, cfg: &ExperimentConfig) -> RunKind {
        match self {
            Command::Simulate | Command::Dominance => commands::simulate_kind(cfg),
            Command::Stability => RunKind::Horizon,
            _ => RunKind::Cycle,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML configuration, or a manifest.json to replay
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub reps: Option<u64>,
    /// Replication worker threads; results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Write one event-log CSV per replication (simulate)
    #[arg(long, global = true)]
    pub trace: bool,
    /// Exit with status 3 when a dominance test rejects
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true, value_name = "F")]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    pub tol: Option<f64>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            reps: self.reps,
            threads: self.threads,
            trace: self.trace,
            alpha: self.alpha,
            tol: self.tol,
        }
    }
}

/// Load, override and resolve the configuration for `command`.
pub fn resolve_config(command: Command, flags: &Flags) -> Result<ExperimentConfig, ConfigError> {
    let path = flags.config.as_ref().ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&flags.overrides());
    cfg.check()?;
    let kind = command.run_kind(&cfg);
    cfg.resolve_init(kind);
    Ok(cfg)
}

pub struct Outcome {
    pub code: i32,
    pub report: Option<Report>,
    pub out_dir: Option<PathBuf>,
}

fn exit_code(report: &Report, strict: bool) -> i32 {
    if !report.incidents.is_empty() {
        EXIT_CAPS
    } else if strict && report.rejected {
        EXIT_REJECTED
    } else if report.failed_checks {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

fn dispatch(command: Command, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<Report, CommandError> {
    match command {
        Command::Simulate => commands::simulate(cfg, out),
        Command::Dominance => commands::dominance(cfg, out),
        Command::Bound => commands::bound(cfg, out),
        Command::Tail => commands::tail(cfg, out),
        Command::Stability => commands::stability(cfg, out),
        Command::SteadyState => commands::steady_state(cfg, out),
        Command::Moments => commands::moments(cfg, out),
        Command::Validate => commands::validate(cfg.run.seed, cfg.run.threads, out),
    }
}

/// Built-in configuration used by `validate` when no document is given.
fn validate_default(flags: &Flags) -> ExperimentConfig {
    let text = "[model]\nrate = { kind = \"constant\", level = 0.5, lambda_h = 0.5 }\n\
                joint = { kind = \"infinite-patience\", service = { kind = \"exponential\", rate = 1.0 } }\n";
    let mut cfg = ExperimentConfig::from_toml_str(text).expect("built-in config parses");
    cfg.apply(&flags.overrides());
    cfg
}

pub fn run(cli: &Cli) -> Outcome {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let cfg = if cli.command == Command::Validate && cli.flags.config.is_none() {
        Ok(validate_default(&cli.flags))
    } else {
        resolve_config(cli.command, &cli.flags)
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tvqueue: {e}");
            return Outcome { code: EXIT_CONFIG, report: None, out_dir: None };
        }
    };
    let mut out = match Artifacts::new(&cfg.output.dir, &cfg.output.formats) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("tvqueue: cannot create {}: {e}", cfg.output.dir.display());
            return Outcome { code: EXIT_FAILURE, report: None, out_dir: None };
        }
    };
    let dir = out.dir().to_path_buf();
    let report = match dispatch(cli.command, &cfg, &mut out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("tvqueue {}: {e}", cli.command.name());
            let code = if matches!(e, CommandError::Config(_)) { EXIT_CONFIG } else { EXIT_FAILURE };
            return Outcome { code, report: None, out_dir: Some(dir) };
        }
    };
    let code = exit_code(&report, cli.flags.strict);
    let manifest = RunManifest {
        artifact: "tvqueue",
        version: env!("CARGO_PKG_VERSION"),
        schema: cfg.schema,
        subcommand: cli.command.name(),
        config_hash: cfg.hash(),
        seed: cfg.run.seed,
        threads: cfg.run.threads,
        strict: cli.flags.strict,
        started_unix,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        exit_code: code,
        outputs: &out.entries,
        cap_incidents: &report.incidents,
        replay: format!("tvqueue {} --config {}", cli.command.name(), dir.join("manifest.json").display()),
        config: &cfg,
    };
    if let Err(e) = write_manifest(&dir, &manifest) {
        eprintln!("tvqueue: cannot write manifest: {e}");
        return Outcome { code: EXIT_FAILURE, report: Some(report), out_dir: Some(dir) };
    }
    if !report.incidents.is_empty() {
        eprintln!("tvqueue: {} replication(s) exceeded their caps", report.incidents.len());
    }
    Outcome { code, report: Some(report), out_dir: Some(dir) }
}

/// Parse `args` (including the program name) and run.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli).code,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}
