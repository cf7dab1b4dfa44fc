//! Experiment configuration documents (TOML, or the `config` member of a
//! run manifest) and their resolution against command-line overrides.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use tvqueue::coupling::Pairing;
use tvqueue::model::validate_cost;
use tvqueue::{Caps, CostFunction, Discipline, Init, JointLaw, QueueSpec, RateFunction, Room, RunKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub rate: RateFunction,
    pub joint: JointLaw,
    #[serde(default = "CostFunction::one")]
    pub g: CostFunction,
    #[serde(default = "fcfs")]
    pub discipline: Discipline,
    /// Filled in from the run kind when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
}

fn fcfs() -> Discipline {
    Discipline::Fcfs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// lambda against lambda_h.
    Rates,
    /// LCFS-PR room ladder plus lambda against lambda_h at each room.
    Rooms,
    /// Psi against the infinite-patience variant.
    AllJoin,
    /// Two nonconstant rates; evidence only.
    Conjecture,
    /// Two sample files from earlier runs.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileArms {
    pub lower: PathBuf,
    pub upper: PathBuf,
    #[serde(default = "default_column")]
    pub column: String,
}

fn default_column() -> String {
    "A".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<RunKind>,
    pub reps: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub caps: Caps,
    /// Evaluation grid for `bound`; chosen from the samples when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_grid: Option<Vec<f64>>,
    pub ks: Vec<Room>,
    pub alpha: f64,
    pub quantiles: Vec<f64>,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub horizon_reps: u64,
    pub suite: Suite,
    pub pairing: Pairing,
    /// Upper arm of the `conjecture` suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_rate: Option<RateFunction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub files: Option<FileArms>,
    pub orders: Vec<u32>,
    /// `[short, long]` horizons of the `stability` growth check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<[f64; 2]>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            kind: None,
            reps: 1000,
            seed: 0,
            threads: None,
            caps: Caps::default(),
            u_grid: None,
            ks: vec![Room::Finite(0), Room::Finite(1), Room::Finite(2), Room::Finite(5), Room::Infinite],
            alpha: 0.01,
            quantiles: vec![0.99, 0.999],
            tol: 1e-3,
            horizon: None,
            horizon_reps: 50,
            suite: Suite::Rates,
            pairing: Pairing::Coupled,
            upper_rate: None,
            files: None,
            orders: vec![1, 2],
            growth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub trace: bool,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), trace: false, formats: vec![Format::Csv, Format::Json] }
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub threads: Option<usize>,
    pub trace: bool,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml_string(&self) -> Result<String, String> {
        toml::to_string(self).map_err(|e| e.to_string())
    }

    /// Read a TOML document, or a JSON manifest/config (by extension).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.into(), message };
        if path.extension().is_some_and(|e| e == "json") {
            let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))
        } else {
            Self::from_toml_str(&text).map_err(parse_err)
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(r) = o.reps {
            self.run.reps = r;
        }
        if let Some(t) = o.threads {
            self.run.threads = Some(t);
        }
        if o.trace {
            self.output.trace = true;
        }
        if let Some(a) = o.alpha {
            self.run.alpha = a;
        }
        if let Some(t) = o.tol {
            self.run.tol = t;
        }
    }

    /// Checks that do not depend on the subcommand.
    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("schema {} is not supported (expected {SCHEMA_VERSION})", self.schema));
        }
        let r = &self.run;
        if r.reps == 0 {
            return bad("run.reps must be positive".into());
        }
        if !(r.alpha > 0.0 && r.alpha < 0.5) {
            return bad(format!("run.alpha must lie in (0, 0.5), got {}", r.alpha));
        }
        if !(r.tol > 0.0 && r.tol < 1.0) {
            return bad(format!("run.tol must lie in (0, 1), got {}", r.tol));
        }
        if let Some(q) = r.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return bad(format!("quantile level {q} outside (0, 1)"));
        }
        if r.orders.contains(&0) {
            return bad("moment orders start at 1".into());
        }
        if r.threads == Some(0) {
            return bad("run.threads must be positive".into());
        }
        if let Some(h) = r.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("run.horizon must be finite and positive, got {h}"));
            }
        }
        if let Some(grid) = &r.u_grid {
            if grid.is_empty() || grid.iter().any(|u| !u.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
                return bad("run.u_grid must be a nonempty ascending list of finite values".into());
            }
        }
        validate_cost(&self.model.g).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Fill the initial state from the run kind when it was left out.
    pub fn resolve_init(&mut self, run: RunKind) {
        if self.model.init.is_none() {
            self.model.init = Some(match run {
                RunKind::BusyPeriod => Init::Workload { x: 1.0 },
                RunKind::Cycle | RunKind::Horizon => Init::Empty,
            });
        }
    }

    pub fn queue_spec(&self) -> QueueSpec {
        QueueSpec::new(
            self.model.rate.clone(),
            self.model.joint.clone(),
            self.model.discipline.clone(),
            self.model.init.clone().unwrap_or(Init::Empty),
        )
    }

    pub fn joint(&self) -> &JointLaw {
        &self.model.joint
    }

    /// SHA-256 of the resolved document with the fields that cannot change
    /// results (thread count, output location) blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.threads = None;
        c.output.dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
