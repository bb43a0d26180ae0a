//! Exact simulation of the Gaussian core and discretised simulation of the
//! two multivariate BSS variants.
//!
//! Constant volatilities take the exact route: the BSS process is then a
//! fixed linear combination of Gaussian-core atoms ∫g(t−s)dW⁽ᵐ⁾, which are
//! sampled jointly by Cholesky factorisation. Time-varying volatilities take
//! a Riemann route over the extended grid [−warmup, T].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Atom, Family, LagCovariances, Target};
use crate::kernel::{GammaKernel, KernelSpec};
use crate::quad::TanhSinh;
use crate::util::par_map;

/// Default cap on N × (stacked members) for dense covariance matrices.
pub const SIZE_CAP: usize = 6000;

/// Past window defaults to WARMUP_DECAYS/λ_min, an e^{−40} kernel tail.
pub const WARMUP_DECAYS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Horizon T.
    pub horizon: f64,
    /// Steps per unit time; Δ = 1/n.
    pub n: usize,
    /// Length of the truncated past used by the Riemann route.
    pub warmup: f64,
}

impl GridSpec {
    pub fn new(horizon: f64, n: usize, warmup: f64) -> Result<Self> {
        if !(horizon > 0.0) || n == 0 || !(warmup >= 0.0) {
            return Err(Error::InvalidGrid(format!("T = {horizon}, n = {n}, warmup = {warmup}")));
        }
        let g = Self { horizon, n, warmup };
        if g.steps() == 0 {
            return Err(Error::InvalidGrid("grid has no increments".into()));
        }
        Ok(g)
    }

    /// Warmup c/λ_min with c = 40.
    pub fn for_spec(horizon: f64, n: usize, spec: &KernelSpec) -> Result<Self> {
        let lmin = spec.cells().map(|(_, _, k)| k.lambda()).fold(f64::INFINITY, f64::min);
        Self::new(horizon, n, WARMUP_DECAYS / lmin)
    }

    /// N = ⌊nT⌋.
    pub fn steps(&self) -> usize {
        libm::floor(self.n as f64 * self.horizon + 1e-9) as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Y⁽ᵏ⁾ = Σ_{r,m} ∫g^{(k,r)}σ^{(r,m)}dW⁽ᵐ⁾ (matrix product).
    Y,
    /// X⁽ᵏ⁾ = Σ_m ∫g^{(k,m)}σ^{(k,m)}dW⁽ᵐ⁾ (elementwise product).
    X,
}

/// What a bundle's columns are, used to catch regime mismatches downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    GaussianCore(Target),
    Bss(Variant),
    /// Per-term pieces Z^{(k,r,m)} (Y) or Z^{(k,m)} (X) of a BSS path.
    BssComponents(Variant),
    Ingested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub kind: PathKind,
    pub seed: Option<u64>,
    pub path_index: Option<u64>,
    pub volatility: Option<String>,
    pub drift: Option<String>,
}

impl PathMeta {
    pub fn ingested() -> Self {
        Self { kind: PathKind::Ingested, seed: None, path_index: None, volatility: None, drift: None }
    }
}

/// Levels at t₀..t_N of p components on a uniform grid.
///
/// Stored as the N+1 levels (row-major); increment i (1-based, as Δᵢ) is
/// row i minus row i−1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub grid: GridSpec,
    pub labels: Vec<String>,
    levels: Vec<f64>,
    pub meta: PathMeta,
}

impl PathBundle {
    pub fn from_levels(grid: GridSpec, labels: Vec<String>, levels: Vec<f64>, meta: PathMeta) -> Result<Self> {
        let p = labels.len();
        let rows = grid.steps() + 1;
        if p == 0 || levels.len() != rows * p {
            return Err(Error::DimensionMismatch { expected: rows * p.max(1), got: levels.len() });
        }
        if let Some(i) = levels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite value at row {}, column {}", i / p, i % p + 1)));
        }
        Ok(Self { grid, labels, levels, meta })
    }

    /// Levels from increments, starting at 0.
    pub fn from_increments(grid: GridSpec, labels: Vec<String>, increments: &[f64], meta: PathMeta) -> Result<Self> {
        let p = labels.len();
        let n = grid.steps();
        if p == 0 || increments.len() != n * p {
            return Err(Error::DimensionMismatch { expected: n * p.max(1), got: increments.len() });
        }
        let mut levels = vec![0.0; (n + 1) * p];
        for i in 0..n {
            for k in 0..p {
                levels[(i + 1) * p + k] = levels[i * p + k] + increments[i * p + k];
            }
        }
        Self::from_levels(grid, labels, levels, meta)
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn level(&self, row: usize, k: usize) -> f64 {
        self.levels[row * self.p() + k]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Δᵢ of component k, i in 1..=N.
    pub fn increment(&self, i: usize, k: usize) -> f64 {
        let p = self.p();
        self.levels[i * p + k] - self.levels[(i - 1) * p + k]
    }

    /// All increments, N×p row-major.
    pub fn increments(&self) -> Vec<f64> {
        let p = self.p();
        (1..=self.steps()).flat_map(|i| (0..p).map(move |k| (i, k))).map(|(i, k)| self.increment(i, k)).collect()
    }

    /// Multiplies column k by c (levels and increments alike).
    pub fn scale_component(&mut self, k: usize, c: f64) {
        let p = self.p();
        for row in self.levels.chunks_mut(p) {
            row[k] *= c;
        }
    }
}

/// Deterministic σ(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFunction {
    Linear { a: f64, b: f64 },
    Sinusoid { level: f64, amplitude: f64, frequency: f64 },
}

impl TimeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFunction::Linear { a, b } => a + b * t,
            TimeFunction::Sinusoid { level, amplitude, frequency } => {
                level + amplitude * libm::sin(2.0 * core::f64::consts::PI * frequency * t)
            }
        }
    }
}

/// σ^{(r,m)}: constant, deterministic in time, or smooth stochastic.
///
/// `SmoothStochastic` is σ_s = level·exp(η·U_s) where U is an Ornstein–Uhlenbeck
/// driver O (rate θ, unit variance) smoothed by dU = κ(O − U)dt. U is C¹, so it
/// is α-Hölder for every α < 1; `alpha` records the advertised exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolatilityModel {
    Constant { c: f64 },
    Deterministic { function: TimeFunction },
    SmoothStochastic { level: f64, eta: f64, theta: f64, kappa: f64, alpha: f64 },
}

impl VolatilityModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VolatilityModel::Constant { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::InvalidModel(format!("constant volatility must be positive, got {c}")))
            }
            VolatilityModel::SmoothStochastic { level, eta, theta, kappa, alpha } => {
                if !(alpha > 0.5 && alpha < 1.0) {
                    return Err(Error::InvalidModel(format!("Hölder exponent {alpha} outside (1/2, 1)")));
                }
                if !(level > 0.0 && theta > 0.0 && kappa > 0.0 && eta.is_finite()) {
                    return Err(Error::InvalidModel("smooth stochastic volatility needs level, θ, κ > 0".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Stationary E[σ²]; None for deterministic time functions.
    pub fn second_moment(&self) -> Option<f64> {
        match *self {
            VolatilityModel::Constant { c } => Some(c * c),
            VolatilityModel::Deterministic { .. } => None,
            VolatilityModel::SmoothStochastic { level, eta, theta, kappa, .. } => {
                Some(level * level * libm::exp(2.0 * eta * eta * kappa / (kappa + theta)))
            }
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            VolatilityModel::Constant { c } => Some(c),
            _ => None,
        }
    }

    pub fn id(&self) -> String {
        match *self {
            VolatilityModel::Constant { c } => format!("constant({c})"),
            VolatilityModel::Deterministic { function } => format!("deterministic({function:?})"),
            VolatilityModel::SmoothStochastic { level, eta, theta, kappa, alpha } => {
                format!("smooth(level={level},eta={eta},theta={theta},kappa={kappa},alpha={alpha})")
            }
        }
    }

    /// Values at times t₀ + j·h, j = 0..len.
    fn sample<R: Rng>(&self, t0: f64, h: f64, len: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            VolatilityModel::Constant { c } => vec![c; len],
            VolatilityModel::Deterministic { function } => (0..len).map(|j| function.eval(t0 + j as f64 * h)).collect(),
            VolatilityModel::SmoothStochastic { level, eta, theta, kappa, .. } => {
                // Joint stationary start: Var U = Cov(O, U) = κ/(κ+θ).
                let c = kappa / (kappa + theta);
                let mut o: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                let mut u = c * o + libm::sqrt(c * (1.0 - c)) * e;
                let a = libm::exp(-theta * h);
                let s = libm::sqrt(-libm::expm1(-2.0 * theta * h));
                let b = -libm::expm1(-kappa * h);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    out.push(level * libm::exp(eta * u));
                    let z: f64 = rng.sample(StandardNormal);
                    let o_next = a * o + s * z;
                    u += b * (0.5 * (o + o_next) - u);
                    o = o_next;
                }
                out
            }
        }
    }
}

/// p×p grid of volatility models; `None` is an identically zero entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySpec {
    pub cells: Vec<Vec<Option<VolatilityModel>>>,
}

impl VolatilitySpec {
    pub fn constant(values: &[Vec<f64>]) -> Self {
        Self {
            cells: values
                .iter()
                .map(|r| r.iter().map(|&c| (c != 0.0).then_some(VolatilityModel::Constant { c })).collect())
                .collect(),
        }
    }

    pub fn uniform(p: usize, model: VolatilityModel) -> Self {
        Self { cells: vec![vec![Some(model); p]; p] }
    }

    pub fn diagonal(models: &[VolatilityModel]) -> Self {
        let p = models.len();
        Self { cells: (0..p).map(|i| (0..p).map(|j| (i == j).then_some(models[i])).collect()).collect() }
    }

    pub fn p(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, r: usize, m: usize) -> Option<&VolatilityModel> {
        self.cells[r][m].as_ref()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.cells.len() != p || self.cells.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: self.cells.len() });
        }
        self.cells.iter().flatten().flatten().try_for_each(VolatilityModel::validate)
    }

    pub fn all_constant(&self) -> bool {
        self.cells.iter().flatten().flatten().all(|m| m.constant().is_some())
    }

    /// E[(σ^{(r,m)})²] per cell (0 for absent cells).
    pub fn second_moments(&self) -> Result<Vec<Vec<f64>>> {
        self.cells
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        None => Ok(0.0),
                        Some(m) => m.second_moment().ok_or(Error::MissingVolatility),
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftModel {
    Zero,
    /// U_t = scale·∫₀ᵗ O_s ds with O a stationary unit-variance OU process of rate `rate`.
    SmoothIntegrated { scale: f64, rate: f64 },
}

impl DriftModel {
    fn levels<R: Rng>(&self, grid: &GridSpec, rng: &mut R) -> Option<Vec<f64>> {
        match *self {
            DriftModel::Zero => None,
            DriftModel::SmoothIntegrated { scale, rate } => {
                let n = grid.steps();
                let h = grid.dt();
                let a = libm::exp(-rate * h);
                let s = libm::sqrt(-libm::expm1(-2.0 * rate * h));
                let mut o: f64 = rng.sample(StandardNormal);
                let mut u = 0.0;
                let mut out = Vec::with_capacity(n + 1);
                out.push(0.0);
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    let o_next = a * o + s * z;
                    u += scale * 0.5 * h * (o + o_next);
                    o = o_next;
                    out.push(u);
                }
                Some(out)
            }
        }
    }

    pub fn id(&self) -> String {
        match *self {
            DriftModel::Zero => "zero".into(),
            DriftModel::SmoothIntegrated { scale, rate } => format!("smooth_integrated(scale={scale},rate={rate})"),
        }
    }
}

/// Per-path RNG: ChaCha12 keyed by the seed, one stream per path index.
pub fn path_rng(seed: u64, path: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Lower Cholesky factor, adding a ridge 1e−12·trace/N escalated ×10 up to
/// 1e−8·trace/N if the plain factorisation fails. Returns the ridge used.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if let Some(c) = a.clone().cholesky() {
        return Ok((c.unpack(), 0.0));
    }
    let n = a.nrows().max(1);
    let base = a.trace() / n as f64;
    let mut ridge = 1e-12 * base;
    while ridge <= 1e-8 * base * (1.0 + 1e-9) {
        let mut b = a.clone();
        for i in 0..a.nrows() {
            b[(i, i)] += ridge;
        }
        if let Some(c) = b.cholesky() {
            return Ok((c.unpack(), ridge));
        }
        ridge *= 10.0;
    }
    let min_eigenvalue = a.clone().symmetric_eigenvalues().min();
    Err(Error::NotPsd { min_eigenvalue })
}

/// x = L z for a lower-triangular L (column sweep over the stored triangle).
fn lower_mul(l: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let n = l.nrows();
    for j in 0..n {
        let zj = z[j];
        if zj == 0.0 {
            continue;
        }
        let col = l.column(j);
        for i in j..n {
            out[i] += col[i] * zj;
        }
    }
}

/// Covariance of the stacked increments (member-major: index = a·N + i).
#[derive(Debug, Clone)]
pub struct CoreCovariance {
    pub grid: GridSpec,
    pub family: Family,
    pub matrix: DMatrix<f64>,
}

/// Stacked increment covariance of a Gaussian-core family, entries
/// Cov(ΔᵢA_a, ΔⱼA_b) = c_ab(j − i) with only N distinct lags per pair computed.
pub fn build_core_covariance(spec: &KernelSpec, grid: &GridSpec, target: Target, cap: usize) -> Result<CoreCovariance> {
    let family = Family::new(spec, target)?;
    build_family_covariance(family, grid, cap)
}

pub fn build_family_covariance(family: Family, grid: &GridSpec, cap: usize) -> Result<CoreCovariance> {
    let n = grid.steps();
    let c = family.len();
    if n * c > cap {
        return Err(Error::SizeCap { size: n * c, cap });
    }
    let lags = LagCovariances::compute(&family, grid.n as f64, n - 1)?;
    let mut matrix = DMatrix::zeros(n * c, n * c);
    for a in 0..c {
        for b in 0..c {
            let Some(series) = lags.series(a, b) else { continue };
            let k = (n - 1) as i64;
            for i in 0..n {
                for j in 0..n {
                    matrix[(a * n + i, b * n + j)] = series[(j as i64 - i as i64 + k) as usize];
                }
            }
        }
    }
    // Exact symmetry regardless of quadrature rounding in mirrored lags.
    let sym = (&matrix + matrix.transpose()) * 0.5;
    Ok(CoreCovariance { grid: *grid, family, matrix: sym })
}

/// Factorised core covariance, shareable read-only across path workers.
#[derive(Debug, Clone)]
pub struct CoreSampler {
    pub grid: GridSpec,
    pub labels: Vec<String>,
    pub target: Target,
    lower: DMatrix<f64>,
    pub ridge: f64,
}

impl CoreSampler {
    pub fn new(cov: &CoreCovariance) -> Result<Self> {
        let (lower, ridge) = cholesky_with_jitter(&cov.matrix)?;
        Ok(Self { grid: cov.grid, labels: cov.family.labels(), target: cov.family.target.clone(), lower, ridge })
    }

    /// Increments (N×c row-major) of one path from `rng`.
    fn increments<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let dim = self.lower.nrows();
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = vec![0.0; dim];
        lower_mul(&self.lower, &z, &mut x);
        let n = self.grid.steps();
        let c = self.labels.len();
        let mut out = vec![0.0; n * c];
        for a in 0..c {
            for i in 0..n {
                out[i * c + a] = x[a * n + i];
            }
        }
        out
    }

    pub fn path(&self, seed: u64, index: u64) -> Result<PathBundle> {
        let mut rng = path_rng(seed, index);
        let inc = self.increments(&mut rng);
        let meta = PathMeta {
            kind: PathKind::GaussianCore(self.target.clone()),
            seed: Some(seed),
            path_index: Some(index),
            volatility: Some("constant(1)".into()),
            drift: Some("zero".into()),
        };
        PathBundle::from_increments(self.grid, self.labels.clone(), &inc, meta)
    }
}

/// M exact Gaussian-core paths; path i depends only on (seed, i).
pub fn simulate_gaussian_core(cov: &CoreCovariance, m: usize, seed: u64) -> Result<Vec<PathBundle>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let sampler = CoreSampler::new(cov)?;
    par_map(m, |i| sampler.path(seed, i as u64)).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Fine cells per observation step on the Riemann route.
    pub substeps: usize,
    /// Use the Riemann route even when every volatility is constant.
    pub force_riemann: bool,
    /// Also return the per-term pieces Z^{(k,r,m)} / Z^{(k,m)}.
    pub keep_components: bool,
    pub size_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { substeps: 4, force_riemann: false, keep_components: false, size_cap: SIZE_CAP }
    }
}

/// σ at observation times t₀..t_N, p² cells row-major per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityPath {
    pub p: usize,
    pub values: Vec<f64>,
}

impl VolatilityPath {
    pub fn constant(p: usize, sigma: &[Vec<f64>], rows: usize) -> Self {
        let row: Vec<f64> = sigma.iter().flatten().copied().collect();
        Self { p, values: row.repeat(rows) }
    }

    pub fn rows(&self) -> usize {
        self.values.len() / (self.p * self.p)
    }

    /// σ^{(r,m)} at row i (zero-based r, m).
    pub fn get(&self, i: usize, r: usize, m: usize) -> f64 {
        self.values[i * self.p * self.p + r * self.p + m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BssPath {
    pub observed: PathBundle,
    pub components: Option<PathBundle>,
    pub volatility: VolatilityPath,
}

/// One BSS term: output k receives σ^{cell}·(∫g dW⁽ᵐ⁾) of atom `atom`.
#[derive(Debug, Clone)]
struct Term {
    output: usize,
    atom: usize,
    cell: (usize, usize),
}

fn bss_terms(spec: &KernelSpec, vol: &VolatilitySpec, variant: Variant) -> (Vec<Atom>, Vec<Term>) {
    let p = spec.p();
    let mut atoms: Vec<Atom> = Vec::new();
    let mut terms = Vec::new();
    let mut push = |k: usize, g: &GammaKernel, m: usize, cell: (usize, usize)| {
        let a = Atom { kernel: *g, measure: m };
        let idx = atoms.iter().position(|x| *x == a).unwrap_or_else(|| {
            atoms.push(a);
            atoms.len() - 1
        });
        terms.push(Term { output: k, atom: idx, cell });
    };
    for k in 0..p {
        match variant {
            Variant::Y => {
                for r in 0..p {
                    for m in 0..p {
                        if let (Some(g), Some(_)) = (spec.get(k, r), vol.get(r, m)) {
                            push(k, g, m, (r, m));
                        }
                    }
                }
            }
            Variant::X => {
                for m in 0..p {
                    if let (Some(g), Some(_)) = (spec.get(k, m), vol.get(k, m)) {
                        push(k, g, m, (k, m));
                    }
                }
            }
        }
    }
    (atoms, terms)
}

/// M paths of Y or X. Constant volatilities use the exact route unless
/// `force_riemann`; anything else uses the Riemann route.
#[allow(clippy::too_many_arguments)]
pub fn simulate_bss(
    spec: &KernelSpec,
    vol: &VolatilitySpec,
    drift: &[DriftModel],
    grid: &GridSpec,
    variant: Variant,
    m: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<Vec<BssPath>> {
    let p = spec.p();
    vol.validate(p)?;
    if drift.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: drift.len() });
    }
    let (atoms, terms) = bss_terms(spec, vol, variant);
    if terms.is_empty() {
        return Err(Error::InvalidModel("every kernel/volatility product is zero".into()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let engine = if vol.all_constant() && !opts.force_riemann {
        Engine::Exact(ExactEngine::new(p, &atoms, grid, opts.size_cap)?)
    } else {
        if !(grid.warmup > 0.0) {
            return Err(Error::InvalidGrid("the Riemann route needs a positive warmup".into()));
        }
        Engine::Riemann(RiemannEngine::new(p, &atoms, grid, opts)?)
    };
    let ctx = PathContext { spec_p: p, vol, drift, grid, variant, terms: &terms, opts };
    par_map(m, |i| {
        let mut rng = path_rng(seed, i as u64);
        let (atom_fn, sigma_obs) = match &engine {
            Engine::Exact(e) => (Fn2::Exact(e.sample(&mut rng)), None),
            Engine::Riemann(e) => {
                let (z, s) = e.sample(&mut rng, ctx.vol, ctx.terms);
                (Fn2::Riemann(z), Some(s))
            }
        };
        ctx.assemble(atom_fn, sigma_obs, &mut rng, seed, i as u64)
    })
    .into_iter()
    .collect()
}

enum Engine {
    Exact(ExactEngine),
    Riemann(RiemannEngine),
}

/// Per-path raw output of an engine.
enum Fn2 {
    /// Atom increments, N×atoms row-major (σ applied at assembly).
    Exact(Vec<f64>),
    /// Term levels at t₀..t_N, (N+1)×terms row-major, σ already inside.
    Riemann(Vec<f64>),
}

struct PathContext<'a> {
    spec_p: usize,
    vol: &'a VolatilitySpec,
    drift: &'a [DriftModel],
    grid: &'a GridSpec,
    variant: Variant,
    terms: &'a [Term],
    opts: &'a SimOptions,
}

impl PathContext<'_> {
    fn assemble(
        &self,
        raw: Fn2,
        sigma_obs: Option<VolatilityPath>,
        rng: &mut ChaCha12Rng,
        seed: u64,
        index: u64,
    ) -> Result<BssPath> {
        let p = self.spec_p;
        let n = self.grid.steps();
        let nt = self.terms.len();
        // Term increments, N×terms.
        let term_inc: Vec<f64> = match raw {
            Fn2::Exact(atoms_inc) => {
                let na = atoms_inc.len() / n;
                let mut out = vec![0.0; n * nt];
                for (t, term) in self.terms.iter().enumerate() {
                    let c = self.vol.get(term.cell.0, term.cell.1).and_then(|m| m.constant()).unwrap_or(0.0);
                    for i in 0..n {
                        out[i * nt + t] = c * atoms_inc[i * na + term.atom];
                    }
                }
                out
            }
            Fn2::Riemann(levels) => {
                let mut out = vec![0.0; n * nt];
                for i in 0..n {
                    for t in 0..nt {
                        out[i * nt + t] = levels[(i + 1) * nt + t] - levels[i * nt + t];
                    }
                }
                out
            }
        };
        let mut obs = vec![0.0; n * p];
        for i in 0..n {
            for (t, term) in self.terms.iter().enumerate() {
                obs[i * p + term.output] += term_inc[i * nt + t];
            }
        }
        for (k, d) in self.drift.iter().enumerate() {
            if let Some(u) = d.levels(self.grid, rng) {
                for i in 0..n {
                    obs[i * p + k] += u[i + 1] - u[i];
                }
            }
        }
        let vol_id = self
            .vol
            .cells
            .iter()
            .flatten()
            .map(|c| c.map_or_else(|| String::from("zero"), |m| m.id()))
            .collect::<Vec<_>>()
            .join(";");
        let drift_id = self.drift.iter().map(DriftModel::id).collect::<Vec<_>>().join(";");
        let meta = |kind| PathMeta {
            kind,
            seed: Some(seed),
            path_index: Some(index),
            volatility: Some(vol_id.clone()),
            drift: Some(drift_id.clone()),
        };
        let labels = (1..=p).map(|k| format!("{}{k}", if self.variant == Variant::Y { "Y" } else { "X" })).collect();
        let observed = PathBundle::from_increments(*self.grid, labels, &obs, meta(PathKind::Bss(self.variant)))?;
        let components = if self.opts.keep_components {
            // Every slot (k,r,m) resp. (k,m) is present; absent pieces stay zero.
            let slots = if self.variant == Variant::Y { p * p * p } else { p * p };
            let labels = (0..slots)
                .map(|s| match self.variant {
                    Variant::Y => format!("Z({},{},{})", s / (p * p) + 1, (s / p) % p + 1, s % p + 1),
                    Variant::X => format!("Z({},{})", s / p + 1, s % p + 1),
                })
                .collect();
            let mut full = vec![0.0; n * slots];
            for (t, term) in self.terms.iter().enumerate() {
                let (r, m) = term.cell;
                let s = match self.variant {
                    Variant::Y => (term.output * p + r) * p + m,
                    Variant::X => term.output * p + m,
                };
                for i in 0..n {
                    full[i * slots + s] = term_inc[i * nt + t];
                }
            }
            Some(PathBundle::from_increments(*self.grid, labels, &full, meta(PathKind::BssComponents(self.variant)))?)
        } else {
            None
        };
        let volatility = sigma_obs.unwrap_or_else(|| {
            let sigma: Vec<Vec<f64>> = self
                .vol
                .cells
                .iter()
                .map(|r| r.iter().map(|c| c.and_then(|m| m.constant()).unwrap_or(0.0)).collect())
                .collect();
            VolatilityPath::constant(p, &sigma, n + 1)
        });
        Ok(BssPath { observed, components, volatility })
    }
}

/// Joint sampling of atom increments, factorised per driving measure.
struct ExactEngine {
    n: usize,
    atoms: usize,
    /// (atom indices on this measure, lower factor of their stacked covariance)
    groups: Vec<(Vec<usize>, DMatrix<f64>)>,
}

impl ExactEngine {
    fn new(p: usize, atoms: &[Atom], grid: &GridSpec, cap: usize) -> Result<Self> {
        // The cap bounds each factorised stack (one per driving measure).
        let n = grid.steps();
        let mut groups = Vec::new();
        for m in 0..p {
            let idx: Vec<usize> = (0..atoms.len()).filter(|&a| atoms[a].measure == m).collect();
            if idx.is_empty() {
                continue;
            }
            let fam = Family::from_atoms(
                p,
                idx.iter().map(|&a| atoms[a]).collect(),
                idx.iter().map(|a| format!("atom{a}")).collect(),
            );
            let cov = build_family_covariance(fam, grid, cap)?;
            let (lower, _) = cholesky_with_jitter(&cov.matrix)?;
            groups.push((idx, lower));
        }
        Ok(Self { n, atoms: atoms.len(), groups })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * self.atoms];
        for (idx, lower) in &self.groups {
            let dim = lower.nrows();
            let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let mut x = vec![0.0; dim];
            lower_mul(lower, &z, &mut x);
            for (g, &a) in idx.iter().enumerate() {
                for i in 0..n {
                    out[i * self.atoms + a] = x[g * n + i];
                }
            }
        }
        out
    }
}

/// Riemann-sum convolution over [−warmup, T] on a fine grid.
struct RiemannEngine {
    p: usize,
    n_obs: usize,
    substeps: usize,
    past_cells: usize,
    h: f64,
    /// Cell weights per atom: w_d = RMS of g over ((d−1)h, dh], d = 1..=cells.
    weights: Vec<Vec<f64>>,
    atom_measure: Vec<usize>,
}

impl RiemannEngine {
    fn new(p: usize, atoms: &[Atom], grid: &GridSpec, opts: &SimOptions) -> Result<Self> {
        let substeps = opts.substeps.max(1);
        let h = grid.dt() / substeps as f64;
        let past_cells = libm::ceil(grid.warmup / h) as usize;
        let n_obs = grid.steps();
        let cells = past_cells + n_obs * substeps;
        let q = TanhSinh::default();
        let mut kernels: Vec<GammaKernel> = Vec::new();
        let mut tables: Vec<Vec<f64>> = Vec::new();
        let mut weights = Vec::with_capacity(atoms.len());
        for a in atoms {
            if let Some(i) = kernels.iter().position(|k| *k == a.kernel) {
                weights.push(tables[i].clone());
                continue;
            }
            let w = cell_rms_weights(&q, &a.kernel, h, cells)?;
            kernels.push(a.kernel);
            tables.push(w.clone());
            weights.push(w);
        }
        Ok(Self { p, n_obs, substeps, past_cells, h, weights, atom_measure: atoms.iter().map(|a| a.measure).collect() })
    }

    /// Term levels at t₀..t_N and σ at observation times.
    fn sample<R: Rng>(&self, rng: &mut R, vol: &VolatilitySpec, terms: &[Term]) -> (Vec<f64>, VolatilityPath) {
        let cells = self.past_cells + self.n_obs * self.substeps;
        let sd = libm::sqrt(self.h);
        let dw: Vec<Vec<f64>> =
            (0..self.p).map(|_| (0..cells).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let t0 = -(self.past_cells as f64) * self.h;
        // σ on cell left points plus one extra point at T.
        let sigma: Vec<Vec<Option<Vec<f64>>>> = vol
            .cells
            .iter()
            .map(|r| r.iter().map(|c| c.map(|m| m.sample(t0, self.h, cells + 1, rng))).collect())
            .collect();
        let nt = terms.len();
        let mut levels = vec![0.0; (self.n_obs + 1) * nt];
        let mut src = vec![0.0; cells];
        for (t, term) in terms.iter().enumerate() {
            let s = sigma[term.cell.0][term.cell.1].as_ref().expect("term built from a present cell");
            let w = &self.weights[term.atom];
            let noise = &dw[self.atom_measure[term.atom]];
            for j in 0..cells {
                src[j] = s[j] * noise[j];
            }
            for i in 0..=self.n_obs {
                let e = self.past_cells + i * self.substeps;
                let mut acc = 0.0;
                for j in 0..e {
                    acc += w[e - j - 1] * src[j];
                }
                levels[i * nt + t] = acc;
            }
        }
        let mut vals = Vec::with_capacity((self.n_obs + 1) * self.p * self.p);
        for i in 0..=self.n_obs {
            let e = self.past_cells + i * self.substeps;
            for row in &sigma {
                for c in row {
                    vals.push(c.as_ref().map_or(0.0, |s| s[e]));
                }
            }
        }
        (levels, VolatilityPath { p: self.p, values: vals })
    }
}

fn cell_rms_weights(q: &TanhSinh, g: &GammaKernel, h: f64, cells: usize) -> Result<Vec<f64>> {
    const EXACT_CELLS: usize = 64;
    let gl = [(-libm::sqrt(0.6), 5.0 / 9.0), (0.0, 8.0 / 9.0), (libm::sqrt(0.6), 5.0 / 9.0)];
    let mut w = Vec::with_capacity(cells);
    for d in 1..=cells {
        let lo = (d - 1) as f64 * h;
        let mean_sq = if d <= EXACT_CELLS {
            let beta = if d == 1 { 2.0 * g.delta().min(0.0) } else { 0.0 };
            let f = |v: f64| {
                let x = g.eval(lo + v);
                x * x
            };
            q.integrate(&f, h, beta)? / h
        } else {
            let mid = lo + 0.5 * h;
            gl.iter()
                .map(|(x, wt)| {
                    let y = g.eval(mid + 0.5 * h * x);
                    0.5 * wt * y * y
                })
                .sum()
        };
        w.push(libm::sqrt(mean_sq));
    }
    Ok(w)
}
