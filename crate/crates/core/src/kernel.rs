//! Gamma kernels g(t) = t^δ e^{−λt}, their cross-moments and the increment
//! correlations of the Gaussian core they drive.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::TanhSinh;
use crate::special::{gamma_ratio, kummer_m, SeriesControl};
use crate::util::{fit_slope, par_map};

/// Integrands are cut where e^{−(λᵢ+λⱼ)x} falls below e^{−TAIL}.
const TAIL: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct GammaKernel {
    delta: f64,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    delta: f64,
    lambda: f64,
}

impl TryFrom<RawKernel> for GammaKernel {
    type Error = Error;
    fn try_from(r: RawKernel) -> Result<Self> {
        GammaKernel::new(r.delta, r.lambda)
    }
}

impl From<GammaKernel> for RawKernel {
    fn from(k: GammaKernel) -> Self {
        RawKernel { delta: k.delta, lambda: k.lambda }
    }
}

impl GammaKernel {
    pub fn new(delta: f64, lambda: f64) -> Result<Self> {
        if !delta.is_finite() || !lambda.is_finite() {
            return Err(Error::InvalidKernel(format!("non-finite parameters δ={delta}, λ={lambda}")));
        }
        if lambda <= 0.0 {
            return Err(Error::InvalidKernel(format!("λ must be positive, got {lambda}")));
        }
        if delta <= -0.5 {
            return Err(Error::InvalidKernel(format!("δ must exceed −1/2 for square integrability, got {delta}")));
        }
        Ok(Self { delta, lambda })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if self.delta == 0.0 {
            libm::exp(-self.lambda * t)
        } else {
            libm::exp(self.delta * libm::log(t) - self.lambda * t)
        }
    }

    /// ψ(s) = g(s + Δ) − g(s) at s = j·Δ + v.
    ///
    /// The anchor `j` is exact, so near the singular points s ∈ {−Δ, 0} the
    /// offset `v` is never absorbed by a larger summand. Far from the origin
    /// the difference is formed as g(s)·expm1(·) to avoid cancellation.
    #[inline]
    pub(crate) fn psi(&self, j: i64, v: f64, dt: f64) -> f64 {
        match j {
            j if j < -1 => {
                let s1 = (j + 1) as f64 * dt + v;
                self.eval(s1)
            }
            -1 => self.eval(v),
            0 => self.eval(dt + v) - self.eval(v),
            _ => {
                let s = j as f64 * dt + v;
                self.eval(s) * libm::expm1(self.delta * libm::log1p(dt / s) - self.lambda * dt)
            }
        }
    }

    /// ψ at an arbitrary point s ≥ Δ, for tail integrals not anchored on the grid.
    fn psi_far(&self, s: f64, dt: f64) -> f64 {
        self.eval(s) * libm::expm1(self.delta * libm::log1p(dt / s) - self.lambda * dt)
    }
}

/// t^δ e^{−λt} for t > 0, zero otherwise.
pub fn gamma_eval(kernel: &GammaKernel, t: f64) -> f64 {
    kernel.eval(t)
}

/// p×p grid of kernels g^{(i,j)}; `None` marks an identically zero cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct KernelSpec {
    p: usize,
    kernels: Vec<Vec<Option<GammaKernel>>>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    p: usize,
    kernels: Vec<Vec<Option<GammaKernel>>>,
}

impl TryFrom<RawSpec> for KernelSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        let spec = KernelSpec::new(r.kernels)?;
        if spec.p != r.p {
            return Err(Error::InvalidKernel(format!("declared p = {} but grid is {}×{}", r.p, spec.p, spec.p)));
        }
        Ok(spec)
    }
}

impl From<KernelSpec> for RawSpec {
    fn from(s: KernelSpec) -> Self {
        RawSpec { p: s.p, kernels: s.kernels }
    }
}

impl KernelSpec {
    pub fn new(kernels: Vec<Vec<Option<GammaKernel>>>) -> Result<Self> {
        let p = kernels.len();
        if p == 0 {
            return Err(Error::InvalidKernel("empty kernel grid".into()));
        }
        if let Some(row) = kernels.iter().position(|r| r.len() != p) {
            return Err(Error::InvalidKernel(format!("row {} has {} cells, expected {p}", row + 1, kernels[row].len())));
        }
        for i in 0..p {
            if kernels[i].iter().all(Option::is_none) {
                return Err(Error::InvalidKernel(format!("component {} has no kernel", i + 1)));
            }
        }
        Ok(Self { p, kernels })
    }

    /// Every cell equal to `k`.
    pub fn uniform(p: usize, k: GammaKernel) -> Self {
        Self { p, kernels: alloc::vec![alloc::vec![Some(k); p]; p] }
    }

    /// g^{(i,i)} = ks[i], zero off the diagonal.
    pub fn diagonal(ks: &[GammaKernel]) -> Self {
        let p = ks.len();
        let kernels = (0..p)
            .map(|i| (0..p).map(|j| (i == j).then_some(ks[i])).collect())
            .collect();
        Self { p, kernels }
    }

    pub fn full(grid: Vec<Vec<GammaKernel>>) -> Result<Self> {
        Self::new(grid.into_iter().map(|r| r.into_iter().map(Some).collect()).collect())
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Zero-based cell access.
    pub fn get(&self, i: usize, j: usize) -> Option<&GammaKernel> {
        self.kernels[i][j].as_ref()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &GammaKernel)> {
        self.kernels
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter_map(move |(j, k)| k.as_ref().map(|k| (i, j, k))))
    }

    pub fn check_component(&self, i: usize) -> Result<()> {
        if i >= self.p {
            return Err(Error::OutOfRange { index: i + 1, max: self.p });
        }
        Ok(())
    }
}

/// Cov(Δ₁A, Δ₁₊ₕB) for A = ∫ka(t−s)dW_s, B = ∫kb(t−s)dW_s on a grid of mesh `dt`.
///
/// Computed as ∫ψ_a(s)ψ_b(s + hΔ)ds over panels anchored at multiples of Δ,
/// which never differences nearly equal autocovariances.
pub fn increment_covariance(q: &TanhSinh, ka: &GammaKernel, kb: &GammaKernel, dt: f64, h: i64) -> Result<f64> {
    if h < 0 {
        return increment_covariance(q, kb, ka, dt, -h);
    }
    let cutoff = TAIL / (ka.lambda + kb.lambda);
    let mut total = 0.0;
    let mut j: i64 = -1;
    loop {
        let left = j as f64 * dt;
        if j >= 1 && left >= cutoff {
            break;
        }
        let len = if j < 1 { dt } else { ((4 * j) as f64 * dt).min(cutoff) - left };
        let jb = j + h;
        let mut beta = 0.0;
        if (j == -1 || j == 0) && ka.delta < 0.0 {
            beta += ka.delta;
        }
        if (jb == -1 || jb == 0) && kb.delta < 0.0 {
            beta += kb.delta;
        }
        let f = |v: f64| ka.psi(j, v, dt) * kb.psi(jb, v, dt);
        total += q.integrate(&f, len, beta)?;
        j = if j < 1 { j + 1 } else { 4 * j };
    }
    Ok(total)
}

/// ∫₀^∞ ki(x + h)·kj(x) dx.
pub fn cross_moment(ki: &GammaKernel, kj: &GammaKernel, h: f64) -> Result<f64> {
    cross_moment_with(&TanhSinh::default(), ki, kj, h)
}

pub fn cross_moment_with(q: &TanhSinh, ki: &GammaKernel, kj: &GammaKernel, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("cross moment needs h ≥ 0, got {h}")));
    }
    let s = ki.lambda + kj.lambda;
    let cutoff = TAIL / s;
    let c = if h > 0.0 { h.min(0.125 / s) } else { 0.125 / s };
    let mut total = 0.0;
    let mut left = 0.0;
    let mut width = c;
    loop {
        let len = if left == 0.0 { c } else { width.min((cutoff - left).max(0.0)) };
        if len <= 0.0 {
            break;
        }
        let mut beta = 0.0;
        if left == 0.0 {
            beta += kj.delta.min(0.0);
            if h == 0.0 {
                beta += ki.delta.min(0.0);
            }
        }
        let f = |v: f64| ki.eval(left + v + h) * kj.eval(left + v);
        total += q.integrate(&f, len, beta)?;
        left += len;
        width = 3.0 * left;
        if left >= cutoff {
            break;
        }
    }
    Ok(total)
}

/// C_{ij}(h) = E[G⁽ⁱ⁾_{t+h} G⁽ʲ⁾_t] = Σ_l ∫₀^∞ g^{(i,l)}(x+h) g^{(j,l)}(x) dx, any real h.
pub fn core_autocovariance(spec: &KernelSpec, i: usize, j: usize, h: f64) -> Result<f64> {
    core_autocovariance_with(&TanhSinh::default(), spec, i, j, h)
}

pub fn core_autocovariance_with(q: &TanhSinh, spec: &KernelSpec, i: usize, j: usize, h: f64) -> Result<f64> {
    spec.check_component(i)?;
    spec.check_component(j)?;
    if h < 0.0 {
        return core_autocovariance_with(q, spec, j, i, -h);
    }
    let mut sum = 0.0;
    for l in 0..spec.p {
        if let (Some(a), Some(b)) = (spec.get(i, l), spec.get(j, l)) {
            sum += cross_moment_with(q, a, b, h)?;
        }
    }
    Ok(sum)
}

/// Cov(Δ₁G⁽ⁱ⁾, Δ₁₊ₖG⁽ʲ⁾) at resolution n (quadrature path).
pub fn quadrature_numerator(q: &TanhSinh, spec: &KernelSpec, n: f64, i: usize, j: usize, k: i64) -> Result<f64> {
    spec.check_component(i)?;
    spec.check_component(j)?;
    let dt = 1.0 / n;
    let mut sum = 0.0;
    for l in 0..spec.p {
        if let (Some(a), Some(b)) = (spec.get(i, l), spec.get(j, l)) {
            sum += increment_covariance(q, a, b, dt, k)?;
        }
    }
    Ok(sum)
}

/// Case I correlation r⁽ⁿ⁾_{i,j}(k).
pub fn increment_correlation(spec: &KernelSpec, n: f64, i: usize, j: usize, k: i64) -> Result<f64> {
    increment_correlation_with(&TanhSinh::default(), spec, n, i, j, k)
}

pub fn increment_correlation_with(q: &TanhSinh, spec: &KernelSpec, n: f64, i: usize, j: usize, k: i64) -> Result<f64> {
    let vi = quadrature_numerator(q, spec, n, i, i, 0)?;
    if !(vi > 0.0) {
        return Err(Error::DegenerateVariance(i + 1));
    }
    if i == j && k == 0 {
        return Ok(1.0);
    }
    let vj = if i == j { vi } else { quadrature_numerator(q, spec, n, j, j, 0)? };
    if !(vj > 0.0) {
        return Err(Error::DegenerateVariance(j + 1));
    }
    Ok(quadrature_numerator(q, spec, n, i, j, k)? / libm::sqrt(vi * vj))
}

/// lim_n r⁽ⁿ⁾(k) for a gamma kernel: ((k+1)^x − 2k^x + (k−1)^x)/2 with x = 2δ+1,
/// the fractional-Gaussian-noise correlation at Hurst index δ + 1/2.
pub fn limiting_correlation(delta: f64, k: u64) -> Result<f64> {
    if !(delta > -0.5 && delta < 0.5) {
        return Err(Error::Domain(format!("δ = {delta} outside (−1/2, 1/2)")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let x = 2.0 * delta + 1.0;
    let kf = k as f64;
    // Second difference of t^x, written with expm1 so large k does not cancel.
    let a = libm::expm1(x * libm::log1p(1.0 / kf));
    let b = if k == 1 { -1.0 } else { libm::expm1(x * libm::log1p(-1.0 / kf)) };
    Ok(0.5 * libm::pow(kf, x) * (a + b))
}

/// Series evaluation of a cross moment with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub error_bound: f64,
}

/// ∫₀^∞ ki(x+h)kj(x)dx for δᵢ = δⱼ = δ via the confluent hypergeometric expansion
/// e^{−λᵢh}[K₁ h^x M(δ+1, x+1, sh) + Γ(x)s^{−x} M(−δ, −2δ, sh)], x = 2δ+1, s = λᵢ+λⱼ,
/// K₁ = Γ(δ+1)Γ(−1−2δ)/Γ(−δ).
pub fn cross_moment_series(ki: &GammaKernel, kj: &GammaKernel, h: f64, ctl: &SeriesControl) -> Result<SeriesValue> {
    if (ki.delta - kj.delta).abs() > 1e-12 {
        return Err(Error::Domain(format!("series needs matched δ, got {} and {}", ki.delta, kj.delta)));
    }
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("cross moment needs h ≥ 0, got {h}")));
    }
    let d = ki.delta;
    let x = 2.0 * d + 1.0;
    let s = ki.lambda + kj.lambda;
    let z = s * h;
    let pole = |e: Error| Error::SeriesDiverged(format!("δ = {d} sits on a pole of the expansion ({e})"));
    let k1 = gamma_ratio(&[d + 1.0, -1.0 - 2.0 * d], &[-d]).map_err(pole)?;
    let g = gamma_ratio(&[x], &[]).map_err(pole)? * libm::pow(s, -x);
    let m2 = kummer_m(-d, -2.0 * d, z, ctl).map_err(pole)?;
    let (t1, e1) = if h > 0.0 {
        let m1 = kummer_m(d + 1.0, x + 1.0, z, ctl)?;
        let c = k1 * libm::pow(h, x);
        (c * m1.value, c.abs() * (4.0 * f64::EPSILON * m1.abs_sum + m1.tail_bound))
    } else {
        (0.0, 0.0)
    };
    let t2 = g * m2.value;
    let e2 = g.abs() * (4.0 * f64::EPSILON * m2.abs_sum + m2.tail_bound);
    let pref = libm::exp(-ki.lambda * h);
    let value = pref * (t1 + t2);
    let error_bound = pref * (e1 + e2 + 4.0 * f64::EPSILON * (t1.abs() + t2.abs()));
    if !(error_bound <= ctl.rel_tol * value.abs()) {
        return Err(Error::SeriesDiverged(format!(
            "cancellation at z = {z}: bound {error_bound:e} vs value {value:e}"
        )));
    }
    Ok(SeriesValue { value, error_bound })
}

fn series_autocovariance(spec: &KernelSpec, i: usize, j: usize, h: f64, ctl: &SeriesControl) -> Result<SeriesValue> {
    if h < 0.0 {
        return series_autocovariance(spec, j, i, -h, ctl);
    }
    let mut out = SeriesValue { value: 0.0, error_bound: 0.0 };
    for l in 0..spec.p {
        if let (Some(a), Some(b)) = (spec.get(i, l), spec.get(j, l)) {
            let v = cross_moment_series(a, b, h, ctl)?;
            out.value += v.value;
            out.error_bound += v.error_bound;
        }
    }
    Ok(out)
}

/// Cov(Δ₁G⁽ⁱ⁾, Δ₁₊ₖG⁽ʲ⁾) = 2C_{ji}(k/n) − C_{ji}((k−1)/n) − C_{ji}((k+1)/n) from the series.
///
/// Fails with `SeriesDiverged` when the kernels violate the matched-δ condition,
/// when δ sits on a pole of the expansion, or when the error bound after the
/// three-term differencing exceeds the requested relative tolerance.
pub fn series_numerator(spec: &KernelSpec, n: f64, i: usize, j: usize, k: i64, ctl: &SeriesControl) -> Result<SeriesValue> {
    spec.check_component(i)?;
    spec.check_component(j)?;
    let deltas: Vec<f64> = (0..spec.p)
        .flat_map(|l| [spec.get(i, l), spec.get(j, l)])
        .flatten()
        .map(|k| k.delta)
        .collect();
    if deltas.iter().any(|d| (d - deltas[0]).abs() > 1e-12) {
        return Err(Error::SeriesDiverged("matched-δ condition violated".into()));
    }
    let kf = k as f64;
    let c = |h: f64| series_autocovariance(spec, j, i, h / n, ctl);
    let (a, b, cc) = (c(kf)?, c(kf - 1.0)?, c(kf + 1.0)?);
    let value = 2.0 * a.value - b.value - cc.value;
    let error_bound = 2.0 * a.error_bound + b.error_bound + cc.error_bound
        + 4.0 * f64::EPSILON * (2.0 * a.value.abs() + b.value.abs() + cc.value.abs());
    if !(error_bound <= ctl.rel_tol * value.abs()) {
        return Err(Error::SeriesDiverged(format!(
            "differencing loses precision: bound {error_bound:e} vs numerator {value:e}"
        )));
    }
    Ok(SeriesValue { value, error_bound })
}

/// Which evaluation path produced a numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NumeratorPath {
    Series,
    Quadrature,
}

/// Series fast path with quadrature fallback.
pub fn numerator(spec: &KernelSpec, n: f64, i: usize, j: usize, k: i64, ctl: &SeriesControl) -> Result<(f64, NumeratorPath)> {
    match series_numerator(spec, n, i, j, k, ctl) {
        Ok(v) => Ok((v.value, NumeratorPath::Series)),
        Err(Error::SeriesDiverged(_)) => {
            Ok((quadrature_numerator(&TanhSinh::default(), spec, n, i, j, k)?, NumeratorPath::Quadrature))
        }
        Err(e) => Err(e),
    }
}

/// Normalisation regime of a correlation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorrelationRegime {
    CaseI,
    CaseIIBar,
    CaseIITilde,
}

/// r⁽ⁿ⁾ values for ordered member pairs at lags 0..=K (zero-based member indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub n: f64,
    pub regime: CorrelationRegime,
    pub max_lag: usize,
    pub entries: BTreeMap<(usize, usize), Vec<f64>>,
}

impl CorrelationTable {
    /// Case I table of the component family G⁽¹⁾..G⁽ᵖ⁾, all ordered pairs.
    pub fn case1(spec: &KernelSpec, n: f64, max_lag: usize) -> Result<Self> {
        let q = TanhSinh::default();
        let p = spec.p;
        let mut var = Vec::with_capacity(p);
        for i in 0..p {
            let v = quadrature_numerator(&q, spec, n, i, i, 0)?;
            if !(v > 0.0) {
                return Err(Error::DegenerateVariance(i + 1));
            }
            var.push(v);
        }
        let jobs: Vec<(usize, usize, usize)> = (0..p)
            .flat_map(|i| (0..p).flat_map(move |j| (0..=max_lag).map(move |k| (i, j, k))))
            .collect();
        let vals = par_map(jobs.len(), |idx| {
            let (i, j, k) = jobs[idx];
            if i == j && k == 0 {
                return Ok(1.0);
            }
            Ok(quadrature_numerator(&q, spec, n, i, j, k as i64)? / libm::sqrt(var[i] * var[j]))
        });
        let mut entries = BTreeMap::new();
        for (idx, v) in vals.into_iter().enumerate() {
            let (i, j, _) = jobs[idx];
            entries.entry((i, j)).or_insert_with(Vec::new).push(v?);
        }
        Ok(Self { n, regime: CorrelationRegime::CaseI, max_lag, entries })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        self.entries.get(&(i, j)).and_then(|v| v.get(k)).copied()
    }
}

/// Outcome of a heuristic diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSquaredSums {
    pub pair: (usize, usize),
    /// (K', Σ_{k=1}^{K'} r(k)²) at K' = K/4, K/2, K.
    pub partial_sums: Vec<(usize, f64)>,
    pub cauchy_delta: f64,
    /// Fitted exponent b of r(k)² ~ k^b over the last decade of lags.
    pub fitted_exponent: Option<f64>,
    pub tail_estimate: f64,
    pub verdict: Verdict,
}

/// Finite-(n, K) evidence for lim_n Σ_k r⁽ⁿ⁾(k)² < ∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquaredCorrelationDiagnostic {
    pub n: f64,
    pub max_lag: usize,
    pub pairs: Vec<PairSquaredSums>,
    /// Exponent 2(2δ−1) of the squared limiting correlation, when a gamma δ is supplied.
    pub limit_exponent: Option<f64>,
    pub verdict: Verdict,
    /// The true double limit is not numerically verifiable; this is evidence only.
    pub heuristic: bool,
}

/// Summand exponents must be below −1 by this margin to count as summable.
const SUMMABILITY_MARGIN: f64 = 0.05;

/// Partial sums below this carry no squared-correlation mass worth fitting:
/// the finite-n residual of a vanishing limit (δ = 0) is flat in k.
pub const NEGLIGIBLE_SUM: f64 = 1e-4;

pub fn check_assumption_squared_correlations(
    table: &CorrelationTable,
    max_lag: usize,
    gamma_delta: Option<f64>,
) -> Result<SquaredCorrelationDiagnostic> {
    if max_lag < 10 {
        return Err(Error::InsufficientLags { needed: 10, got: max_lag });
    }
    if table.max_lag < max_lag {
        return Err(Error::InsufficientLags { needed: max_lag, got: table.max_lag });
    }
    let mut pairs = Vec::new();
    for (&pair, r) in &table.entries {
        let sq: Vec<f64> = r[1..=max_lag].iter().map(|x| x * x).collect();
        let partial = |kk: usize| sq[..kk].iter().sum::<f64>();
        let partial_sums: Vec<(usize, f64)> =
            [max_lag / 4, max_lag / 2, max_lag].iter().map(|&kk| (kk, partial(kk))).collect();
        let cauchy_delta = (partial_sums[2].1 - partial_sums[1].1).abs();
        let lo = (max_lag / 10).max(1);
        let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=max_lag)
            .filter(|&k| sq[k - 1] > 1e-300)
            .map(|k| (libm::log(k as f64), libm::log(sq[k - 1])))
            .unzip();
        let total = partial_sums[2].1;
        let negligible = sq[max_lag - 1] <= 1e-12 * total.max(1e-300) || total <= NEGLIGIBLE_SUM;
        let fitted_exponent = if xs.len() >= 3 { Some(fit_slope(&xs, &ys)) } else { None };
        let (tail_estimate, verdict) = match fitted_exponent {
            _ if negligible => (0.0, Verdict::Pass),
            Some(b) if b < -1.0 - SUMMABILITY_MARGIN => {
                (sq[max_lag - 1] * max_lag as f64 / (-b - 1.0), Verdict::Pass)
            }
            Some(b) if b < -1.0 => (sq[max_lag - 1] * max_lag as f64 / (-b - 1.0), Verdict::Warn),
            _ => (f64::INFINITY, Verdict::Fail),
        };
        pairs.push(PairSquaredSums { pair, partial_sums, cauchy_delta, fitted_exponent, tail_estimate, verdict });
    }
    let limit_exponent = gamma_delta.map(|d| 2.0 * (2.0 * d - 1.0));
    let mut verdict = pairs.iter().map(|p| p.verdict).max_by_key(|v| *v as u8).unwrap_or(Verdict::Pass);
    if let Some(b) = limit_exponent {
        if b >= -1.0 && verdict == Verdict::Pass {
            verdict = Verdict::Warn;
        }
    }
    Ok(SquaredCorrelationDiagnostic { n: table.n, max_lag, pairs, limit_exponent, verdict, heuristic: true })
}

/// ∫_A ψ(s)² ds for A = (a, ∞), a ≥ 0, with ψ(s) = g(s+Δ) − g(s).
fn psi_square_tail(q: &TanhSinh, k: &GammaKernel, dt: f64, a: f64) -> Result<f64> {
    let cutoff = TAIL / (2.0 * k.lambda);
    let mut total = 0.0;
    let mut left = a;
    if a < dt {
        // Grid-anchored part [a, Δ]; a = 0 keeps the singular endpoint exact.
        let beta = if a == 0.0 { 2.0 * k.delta.min(0.0) } else { 0.0 };
        let f = |v: f64| {
            let r = k.psi(0, a + v, dt);
            r * r
        };
        total += q.integrate(&f, dt - a, beta)?;
        left = dt;
    }
    let mut width = 3.0 * left;
    while left < cutoff {
        let len = width.min(cutoff - left);
        let base = left;
        let f = |v: f64| {
            let r = k.psi_far(base + v, dt);
            r * r
        };
        total += q.integrate(&f, len, 0.0)?;
        left += len;
        width = 3.0 * left;
    }
    Ok(total)
}

/// π_n((a, ∞)) = ∫_a^∞ ψ² / ∫_0^∞ ψ².
pub fn pi_n(kernel: &GammaKernel, n: f64, a: f64) -> Result<f64> {
    if a <= 0.0 {
        return Ok(1.0);
    }
    let q = TanhSinh::default();
    let dt = 1.0 / n;
    let den = psi_square_tail(&q, kernel, dt, 0.0)?;
    Ok(psi_square_tail(&q, kernel, dt, a)? / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiDecayRow {
    pub n: f64,
    pub kappa: f64,
    pub pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiDecayFit {
    pub kappa: f64,
    /// λ in π_n = O(n^{λ(1−κ)}), from a log-log fit across the n grid.
    pub lambda: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiDecayDiagnostic {
    pub kernel: GammaKernel,
    pub rows: Vec<PiDecayRow>,
    pub fits: Vec<PiDecayFit>,
    pub verdict: Verdict,
}

pub fn check_assumption_pi_decay(kernel: &GammaKernel, ns: &[f64], kappas: &[f64]) -> Result<PiDecayDiagnostic> {
    if let Some(k) = kappas.iter().find(|k| !(**k > 0.0 && **k < 1.0)) {
        return Err(Error::Domain(format!("κ = {k} outside (0, 1)")));
    }
    if ns.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ns.len() });
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &kappa in kappas {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &n in ns {
            let pi = pi_n(kernel, n, libm::pow(n, -kappa))?;
            rows.push(PiDecayRow { n, kappa, pi });
            xs.push(libm::log(n));
            ys.push(libm::log(pi.max(1e-300)));
        }
        let lambda = fit_slope(&xs, &ys) / (1.0 - kappa);
        let verdict = if lambda < -1.0 { Verdict::Pass } else { Verdict::Fail };
        fits.push(PiDecayFit { kappa, lambda, verdict });
    }
    let verdict = if fits.iter().all(|f| f.verdict == Verdict::Pass) { Verdict::Pass } else { Verdict::Fail };
    Ok(PiDecayDiagnostic { kernel: *kernel, rows, fits, verdict })
}

/// sqrt(∫₀^∞ ψ²)/τₙ for a single kernel with unit volatility: the quantity that
/// must stay bounded in n. It never exceeds 1 because τₙ² = ∫₀^Δ g² + ∫₀^∞ ψ².
pub fn past_increment_ratio(kernel: &GammaKernel, n: f64) -> Result<f64> {
    let q = TanhSinh::default();
    let dt = 1.0 / n;
    let past = psi_square_tail(&q, kernel, dt, 0.0)?;
    let var = increment_covariance(&q, kernel, kernel, dt, 0)?;
    Ok(libm::sqrt(past / var))
}

pub fn describe(k: &GammaKernel) -> String {
    format!("gamma(δ={}, λ={})", k.delta, k.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(d: f64, l: f64) -> GammaKernel {
        GammaKernel::new(d, l).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(GammaKernel::new(-0.5, 1.0).is_err());
        assert!(GammaKernel::new(0.1, 0.0).is_err());
        assert!(GammaKernel::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn psi_far_matches_direct_difference() {
        let g = k(0.3, 1.2);
        let dt = 0.01;
        for s in [0.05, 0.7, 3.0] {
            let direct = g.eval(s + dt) - g.eval(s);
            assert!((g.psi_far(s, dt) - direct).abs() < 1e-12 * direct.abs().max(1e-3));
        }
    }

    #[test]
    fn increment_variance_of_exponential_kernel() {
        // C(h) = e^{−h}/2 so Var = 1 − e^{−Δ}.
        let q = TanhSinh::default();
        let g = k(0.0, 1.0);
        for n in [1.0, 100.0, 16384.0] {
            let v = increment_covariance(&q, &g, &g, 1.0 / n, 0).unwrap();
            let exact = -libm::expm1(-1.0 / n);
            assert!((v - exact).abs() < 1e-12 * exact, "n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn exponential_kernel_lag_covariance() {
        // 2C(kΔ) − C((k−1)Δ) − C((k+1)Δ) = −e^{−(k−1)Δ}(1−e^{−Δ})²/2 for k ≥ 1.
        let q = TanhSinh::default();
        let g = k(0.0, 1.0);
        let dt = 0.01;
        for h in [1i64, 3, 40] {
            let v = increment_covariance(&q, &g, &g, dt, h).unwrap();
            let e = -libm::exp(-((h - 1) as f64) * dt) * libm::pow(-libm::expm1(-dt), 2.0) / 2.0;
            assert!((v - e).abs() < 1e-11 * e.abs(), "h={h}: {v} vs {e}");
        }
    }

    #[test]
    fn limiting_correlation_far_lags_are_stable() {
        let r = limiting_correlation(0.25, 1_000_000).unwrap();
        // x(x−1)/2 k^{x−2} to leading order
        let approx = 0.5 * 1.5 * 0.5 * libm::pow(1e6, -0.5);
        assert!((r / approx - 1.0).abs() < 1e-6);
    }
}
