//! Experiment configuration, read from TOML.
//!
//! ```toml
//! kind = "clt"               # lln | clt | feasible | audit | gaussian_core_clt
//! seed = 42
//! paths = 2000
//! se_multiplier = 3.0
//! regime = "tilde_theoretical"
//!
//! [grid]
//! n = 500
//! horizon = 1.0
//!
//! [kernel]
//! diagonal = [{ delta = 0.25, lambda = 1.0 }, { delta = 0.25, lambda = 2.0 }]
//!
//! [volatility]
//! constant = [[1.0, 0.0], [0.0, 2.0]]
//! ```

use std::path::{Path, PathBuf};

use bss_core::scaling::TauBarMode;
use bss_core::simulate::{DriftModel, Variant, VolatilityModel, VolatilitySpec};
use bss_core::{GammaKernel, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{ToolkitError, ToolkitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    Lln,
    Clt,
    Feasible,
    Audit,
    GaussianCoreClt,
}

/// Scaling regime selected for downstream statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RegimeChoice {
    /// τ per Gaussian-core component.
    CaseI,
    /// τ̄ with the summed-diagonal definition (variant Y).
    BarSum,
    /// τ̄ with the max-over-r definition (variant Y).
    BarMax,
    /// τ̃ from E[σ²] (variant X).
    TildeTheoretical,
    /// τ̃ from observed increments (variant X).
    TildeEmpirical,
}

impl RegimeChoice {
    pub fn variant(self) -> Option<Variant> {
        match self {
            RegimeChoice::CaseI => None,
            RegimeChoice::BarSum | RegimeChoice::BarMax => Some(Variant::Y),
            RegimeChoice::TildeTheoretical | RegimeChoice::TildeEmpirical => Some(Variant::X),
        }
    }

    pub fn bar_mode(self) -> Option<TauBarMode> {
        match self {
            RegimeChoice::BarSum => Some(TauBarMode::SumDiagonal),
            RegimeChoice::BarMax => Some(TauBarMode::MaxOverR),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub delta: f64,
    pub lambda: f64,
}

impl KernelParams {
    fn build(self) -> ToolkitResult<GammaKernel> {
        Ok(GammaKernel::new(self.delta, self.lambda)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelConfig {
    Uniform { p: usize, kernel: KernelParams },
    Diagonal(Vec<KernelParams>),
    Full(Vec<Vec<KernelParams>>),
    /// JSON-serialised `KernelSpec`, relative to the config file.
    File(PathBuf),
}

impl KernelConfig {
    pub fn build(&self, base: &Path) -> ToolkitResult<KernelSpec> {
        Ok(match self {
            KernelConfig::Uniform { p, kernel } => KernelSpec::uniform(*p, kernel.build()?),
            KernelConfig::Diagonal(ks) => {
                KernelSpec::diagonal(&ks.iter().map(|k| k.build()).collect::<ToolkitResult<Vec<_>>>()?)
            }
            KernelConfig::Full(rows) => KernelSpec::full(
                rows.iter()
                    .map(|r| r.iter().map(|k| k.build()).collect::<ToolkitResult<Vec<_>>>())
                    .collect::<ToolkitResult<Vec<_>>>()?,
            )?,
            KernelConfig::File(path) => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path).map_err(|e| ToolkitError::io(&path, e))?;
                serde_json::from_str(&text)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolatilityConfig {
    /// σ matrix; zeros are absent cells.
    Constant(Vec<Vec<f64>>),
    Diagonal(Vec<VolatilityModel>),
    Uniform { p: usize, model: VolatilityModel },
}

impl VolatilityConfig {
    pub fn build(&self) -> VolatilitySpec {
        match self {
            VolatilityConfig::Constant(m) => VolatilitySpec::constant(m),
            VolatilityConfig::Diagonal(ms) => VolatilitySpec::diagonal(ms),
            VolatilityConfig::Uniform { p, model } => VolatilitySpec::uniform(*p, *model),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

fn three() -> f64 {
    3.0
}

/// δ, λ grid and diagnostic resolutions for the assumption audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub deltas: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_audit_n")]
    pub n: f64,
    #[serde(default = "default_audit_lags")]
    pub max_lag: usize,
    #[serde(default = "default_pi_ns")]
    pub pi_ns: Vec<f64>,
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
}

fn default_audit_n() -> f64 {
    65536.0
}

fn default_audit_lags() -> usize {
    1000
}

fn default_pi_ns() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

fn default_kappas() -> Vec<f64> {
    vec![0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "three")]
    pub se_multiplier: f64,
    #[serde(default)]
    pub regime: Option<RegimeChoice>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub volatility: Option<VolatilityConfig>,
    /// One drift model per component; zero drift when absent.
    #[serde(default)]
    pub drift: Option<Vec<DriftModel>>,
    /// Checkpoints as fractions of the horizon.
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    /// Resolutions for the LLN error-decrease check.
    #[serde(default)]
    pub resolutions: Option<Vec<usize>>,
    /// Time of the feasible statistics, as a fraction of the horizon.
    #[serde(default)]
    pub ratio_time: Option<f64>,
    #[serde(default)]
    pub audit: Option<AuditConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Directory against which relative paths in the config resolve.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_paths() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            name: None,
            seed: 0,
            paths: default_paths(),
            se_multiplier: 3.0,
            regime: None,
            grid: None,
            kernel: None,
            volatility: None,
            drift: None,
            checkpoints: None,
            resolutions: None,
            ratio_time: None,
            audit: None,
            out_dir: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str) -> ToolkitResult<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> ToolkitResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolkitError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> ToolkitResult<()> {
        if self.paths == 0 {
            return Err(ToolkitError::Config("paths must be at least 1".into()));
        }
        if !(self.se_multiplier >= 1.0) {
            return Err(ToolkitError::Config(format!("se_multiplier {} below 1", self.se_multiplier)));
        }
        if let Some(g) = &self.grid {
            if g.n == 0 || !(g.horizon > 0.0) {
                return Err(ToolkitError::Config("grid needs n ≥ 1 and horizon > 0".into()));
            }
        }
        if let Some(cs) = &self.checkpoints {
            if cs.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
                return Err(ToolkitError::Config("checkpoints must be fractions in (0, 1]".into()));
            }
        }
        if self.kind != ExperimentKind::Audit && self.kernel.is_none() {
            return Err(ToolkitError::Config("missing [kernel]".into()));
        }
        if self.kind == ExperimentKind::Audit && self.audit.is_none() {
            return Err(ToolkitError::Config("missing [audit]".into()));
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> ToolkitResult<KernelSpec> {
        self.kernel.as_ref().ok_or_else(|| ToolkitError::Config("missing [kernel]".into()))?.build(&self.base_dir)
    }

    pub fn grid(&self) -> ToolkitResult<GridConfig> {
        self.grid.ok_or_else(|| ToolkitError::Config("missing [grid]".into()))
    }

    /// σ spec; defaults to the identity (σ ≡ 1 on the diagonal).
    pub fn volatility_spec(&self, p: usize) -> VolatilitySpec {
        match &self.volatility {
            Some(v) => v.build(),
            None => VolatilitySpec::diagonal(&vec![VolatilityModel::Constant { c: 1.0 }; p]),
        }
    }

    pub fn drift_models(&self, p: usize) -> ToolkitResult<Vec<DriftModel>> {
        match &self.drift {
            None => Ok(vec![DriftModel::Zero; p]),
            Some(d) if d.len() == p => Ok(d.clone()),
            Some(d) => Err(ToolkitError::Config(format!("{} drift models for {p} components", d.len()))),
        }
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        self.checkpoints.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0])
    }
}
