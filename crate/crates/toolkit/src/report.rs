//! Experiment reports: per-statistic records with their theoretical provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};

/// Which limit result a record tests, with a hash of the target formula.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetProvenance {
    pub theorem: String,
    pub formula: String,
    pub formula_hash: String,
}

impl TargetProvenance {
    pub fn new(theorem: &str, formula: &str) -> Self {
        let digest = Sha256::digest(formula.as_bytes());
        let hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Self { theorem: theorem.into(), formula: formula.into(), formula_hash: hash }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// |empirical − target| ≤ mult·SE.
    Mean,
    /// Sample covariance within mult·SE of its target.
    Covariance,
    /// Jarque–Bera p-value at or above the level.
    Normality,
    /// Sequence strictly decreasing.
    Monotone,
    /// Exact equality or a deterministic bound.
    Exact,
    /// Bit-for-bit equality of recomputed statistics.
    Bitwise,
    /// Numerical diagnostic of a model assumption.
    Assumption,
    /// Parameter domain check.
    Domain,
    /// Sample correlation between statistic and the driving path ≈ 0.
    Independence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub statistic: String,
    pub check: Check,
    pub time: Option<f64>,
    pub empirical: Option<f64>,
    pub target: Option<f64>,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub pass: bool,
    /// Whether the record counts toward the report verdict.
    pub gating: bool,
    pub provenance: TargetProvenance,
    pub note: Option<String>,
}

impl Record {
    pub fn new(statistic: impl Into<String>, check: Check, provenance: &TargetProvenance) -> Self {
        Self {
            statistic: statistic.into(),
            check,
            time: None,
            empirical: None,
            target: None,
            se: None,
            z: None,
            pass: false,
            gating: true,
            provenance: provenance.clone(),
            note: None,
        }
    }

    /// z-test of `empirical` against `target`.
    pub fn z_test(mut self, empirical: f64, target: f64, se: f64, mult: f64) -> Self {
        let z = (empirical - target) / se;
        self.empirical = Some(empirical);
        self.target = Some(target);
        self.se = Some(se);
        self.z = Some(z);
        self.pass = z.abs() <= mult || (empirical == target);
        self
    }

    pub fn at(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn values(mut self, empirical: Option<f64>, target: Option<f64>) -> Self {
        self.empirical = empirical;
        self.target = target;
        self
    }

    pub fn pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    pub fn informational(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

/// Run-dependent facts kept out of the report so reports stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub se_multiplier: f64,
    pub records: Vec<Record>,
    pub pass: bool,
    pub environment: Environment,
    /// Experiment-specific numbers (targets, scaling factors, D diagnostics).
    pub details: serde_json::Value,
    #[serde(skip)]
    pub timing: Option<Timing>,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig, records: Vec<Record>, details: serde_json::Value) -> Self {
        let pass = records.iter().filter(|r| r.gating).all(|r| r.pass);
        Self {
            name: cfg.name.clone().unwrap_or_else(|| format!("{:?}", cfg.kind).to_lowercase()),
            kind: cfg.kind,
            config: cfg.clone(),
            se_multiplier: cfg.se_multiplier,
            records,
            pass,
            environment: Environment::current(),
            details,
            timing: None,
        }
    }

    /// Canonical serialised form; equal for equal (config, seed).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.gating && !r.pass)
    }
}
