//! Realised covariation, its centring term, the √n-centred CLT statistic and
//! the two τ-free ratio statistics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{BiasWeight, DesignAt};
use crate::error::{Error, Result};
use crate::indexing::{flat_from_pair, vech_index, vech_len, IndexMapDescriptor};
use crate::scaling::{Regime, ScalingFactors};
use crate::simulate::{PathBundle, PathKind, Variant, VolatilityPath};

/// A vech-stored p×p symmetric matrix at each grid time t₀..t_N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VechSeries {
    pub p: usize,
    pub times: Vec<f64>,
    /// Row-major, one row of p(p+1)/2 entries (k ≥ l, row order) per time.
    pub values: Vec<f64>,
}

impl VechSeries {
    fn zeros(p: usize, times: Vec<f64>) -> Self {
        let len = times.len() * vech_len(p);
        Self { p, times, values: vec![0.0; len] }
    }

    pub fn rows(&self) -> usize {
        self.times.len()
    }

    pub fn width(&self) -> usize {
        vech_len(self.p)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    /// Entry (k, l) at row i (zero-based, either order).
    pub fn get(&self, i: usize, k: usize, l: usize) -> f64 {
        self.row(i)[slot(k, l)]
    }

    fn set(&mut self, i: usize, k: usize, l: usize, v: f64) {
        let w = self.width();
        self.values[i * w + slot(k, l)] = v;
    }

    /// Full p×p matrix at row i.
    pub fn matrix_at(&self, i: usize) -> Vec<Vec<f64>> {
        (0..self.p).map(|k| (0..self.p).map(|l| self.get(i, k, l)).collect()).collect()
    }

    /// Row index of the last grid time ≤ t.
    pub fn row_at(&self, t: f64) -> usize {
        self.times.iter().rposition(|&s| s <= t + 1e-9).unwrap_or(0)
    }
}

/// Zero-based position of (k, l) in vech order.
pub fn slot(k: usize, l: usize) -> usize {
    let (a, b) = (k.max(l), k.min(l));
    vech_index(a + 1, b + 1).expect("b ≤ a") - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariationProcess {
    pub regime: Regime,
    pub n: usize,
    pub series: VechSeries,
}

fn compatible(kind: &PathKind, regime: Regime) -> bool {
    use Regime::*;
    match kind {
        PathKind::Ingested => regime != CaseITriple,
        PathKind::GaussianCore(_) => matches!(regime, CaseI | Partition),
        PathKind::Bss(Variant::Y) => matches!(regime, CaseIIBar | CaseIITildeEmpirical),
        PathKind::Bss(Variant::X) => matches!(regime, CaseIITildeTheoretical | CaseIITildeEmpirical),
        PathKind::BssComponents(Variant::Y) => regime == CaseITriple,
        PathKind::BssComponents(Variant::X) => false,
    }
}

/// Regimes whose statistics may be centred by each other's bias terms.
fn same_family(a: Regime, b: Regime) -> bool {
    use Regime::*;
    a == b || matches!((a, b), (CaseIITildeTheoretical | CaseIITildeEmpirical, CaseIITildeTheoretical | CaseIITildeEmpirical))
}

fn times(paths: &PathBundle) -> Vec<f64> {
    (0..=paths.steps()).map(|i| paths.grid.time(i)).collect()
}

/// Scaled increments ΔA⁽ᵏ⁾/τ⁽ᵏ⁾, N×p row-major.
fn scaled_increments(paths: &PathBundle, scaling: &ScalingFactors) -> Result<(usize, Vec<f64>)> {
    let n_inc = paths.steps();
    if scaling.regime == Regime::CaseITriple {
        // Columns are the pieces Z^{(k,r,m)} at (k·p + r)·p + m; aggregate per k.
        let cols = paths.p();
        let p = (1..=cols).find(|p| p * p * p == cols).ok_or(Error::DimensionMismatch { expected: 8, got: cols })?;
        if scaling.values.len() != p * p {
            return Err(Error::DimensionMismatch { expected: p * p, got: scaling.values.len() });
        }
        let mut out = vec![0.0; n_inc * p];
        for i in 1..=n_inc {
            for (c, _) in paths.labels.iter().enumerate() {
                let (k, r) = (c / (p * p), (c / p) % p);
                out[(i - 1) * p + k] += paths.increment(i, c) / scaling.values[k * p + r];
            }
        }
        return Ok((p, out));
    }
    let p = paths.p();
    let tau = scaling.components(p)?;
    let mut out = vec![0.0; n_inc * p];
    for i in 1..=n_inc {
        for k in 0..p {
            out[(i - 1) * p + k] = paths.increment(i, k) / tau[k];
        }
    }
    Ok((p, out))
}

/// (1/n)Σ_{i≤⌊nt⌋}(ΔᵢA⁽ᵏ⁾/τ⁽ᵏ⁾)(ΔᵢA⁽ˡ⁾/τ⁽ˡ⁾) at every grid time.
pub fn realised_covariation(paths: &PathBundle, scaling: &ScalingFactors) -> Result<CovariationProcess> {
    if scaling.n != paths.grid.n {
        return Err(Error::RegimeMismatch(format!("scaling at n = {}, paths at n = {}", scaling.n, paths.grid.n)));
    }
    if !compatible(&paths.meta.kind, scaling.regime) {
        return Err(Error::RegimeMismatch(format!("{:?} scaling on {:?} paths", scaling.regime, paths.meta.kind)));
    }
    let (p, x) = scaled_increments(paths, scaling)?;
    let inv_n = 1.0 / paths.grid.n as f64;
    Ok(CovariationProcess { regime: scaling.regime, n: paths.grid.n, series: running_products(p, times(paths), &x, inv_n) })
}

fn running_products(p: usize, times: Vec<f64>, x: &[f64], factor: f64) -> VechSeries {
    let mut s = VechSeries::zeros(p, times);
    let w = s.width();
    for i in 1..s.rows() {
        let row = &x[(i - 1) * p..i * p];
        for k in 0..p {
            for l in 0..=k {
                let j = slot(k, l);
                s.values[i * w + j] = s.values[(i - 1) * w + j] + factor * row[k] * row[l];
            }
        }
    }
    s
}

/// R_{t,n}: Σ ρ(0)-weights × ∫₀ᵗσ_aσ_b ds at each grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTerm {
    pub regime: Regime,
    pub n: usize,
    pub series: VechSeries,
    /// Lag-0 weights per vech entry.
    pub weights: Vec<Vec<BiasWeight>>,
    /// ∫₀^{tᵢ}σ_aσ_b ds for each distinct pair of σ cells (None: σ ≡ 1).
    pub integrals: Vec<(Option<[(usize, usize); 2]>, Vec<f64>)>,
}

/// Centring term of the CLT statistic, with weights at the design's own n and
/// σσ integrated by the trapezoid rule on the volatility grid (spacing 1/n).
pub fn bias_term(at: &DesignAt<'_>, vol: &VolatilityPath) -> Result<BiasTerm> {
    bias_from_weights(&at.design.descriptor, at.scaling.regime, at.n, &at.bias_weights(), vol)
}

/// Centring term for explicit per-block lag-0 weights, e.g. limit weights r̄(0)
/// taken from a design evaluated at a much finer resolution than `n`.
pub fn bias_from_weights(
    d: &IndexMapDescriptor,
    regime: Regime,
    n: usize,
    blocks: &[Vec<BiasWeight>],
    vol: &VolatilityPath,
) -> Result<BiasTerm> {
    let p = d.p;
    if vol.rows() == 0 {
        return Err(Error::MissingVolatility);
    }
    if vol.p != p {
        return Err(Error::DimensionMismatch { expected: p, got: vol.p });
    }
    if blocks.len() != d.statistic_dim {
        return Err(Error::DimensionMismatch { expected: d.statistic_dim, got: blocks.len() });
    }
    let rows = vol.rows();
    let dt = 1.0 / n as f64;
    let times: Vec<f64> = (0..rows).map(|i| i as f64 * dt).collect();
    let mut weights = Vec::with_capacity(vech_len(p));
    let mut integrals: Vec<(Option<[(usize, usize); 2]>, Vec<f64>)> = Vec::new();
    let mut series = VechSeries::zeros(p, times.clone());
    for k in 0..p {
        for l in 0..=k {
            let b = if d.is_vech() { vech_index(k + 1, l + 1)? } else { flat_from_pair(k + 1, l + 1, p)? };
            let ws = blocks[b - 1].clone();
            for w in &ws {
                let idx = match integrals.iter().position(|(c, _)| *c == w.cells) {
                    Some(i) => i,
                    None => {
                        integrals.push((w.cells, integrate(vol, w.cells, dt)));
                        integrals.len() - 1
                    }
                };
                for i in 0..rows {
                    let cur = series.get(i, k, l);
                    series.set(i, k, l, cur + w.weight * integrals[idx].1[i]);
                }
            }
            weights.push(ws);
        }
    }
    Ok(BiasTerm { regime, n, series, weights, integrals })
}

fn integrate(vol: &VolatilityPath, cells: Option<[(usize, usize); 2]>, dt: f64) -> Vec<f64> {
    let f = |i: usize| match cells {
        None => 1.0,
        Some([(r, m), (q, w)]) => vol.get(i, r, m) * vol.get(i, q, w),
    };
    let mut out = Vec::with_capacity(vol.rows());
    out.push(0.0);
    for i in 1..vol.rows() {
        out.push(out[i - 1] + 0.5 * dt * (f(i - 1) + f(i)));
    }
    out
}

/// √n(cov_t − R_{t,n}) at every grid time.
pub fn clt_statistic(cov: &CovariationProcess, bias: &BiasTerm) -> Result<VechSeries> {
    if !same_family(cov.regime, bias.regime) {
        return Err(Error::RegimeMismatch(format!("{:?} statistic centred by {:?} bias", cov.regime, bias.regime)));
    }
    if cov.n != bias.n || cov.series.p != bias.series.p || cov.series.rows() != bias.series.rows() {
        return Err(Error::RegimeMismatch("statistic and bias live on different grids".into()));
    }
    let root = libm::sqrt(cov.n as f64);
    let values = cov.series.values.iter().zip(&bias.series.values).map(|(c, b)| root * (c - b)).collect();
    Ok(VechSeries { p: cov.series.p, times: cov.series.times.clone(), values })
}

/// Default ε as a fraction of the horizon.
pub const EPSILON_FRACTION: f64 = 0.05;

/// ΣΔY⁽ᵏ⁾ΔY⁽ˡ⁾ / (sqrt(Σ(ΔY⁽ᵏ⁾)²)·sqrt(Σ(ΔY⁽ˡ⁾)²)) at grid times t ≥ ε.
pub fn correlation_ratio(paths: &PathBundle, epsilon: Option<f64>) -> Result<VechSeries> {
    let eps = epsilon.unwrap_or(EPSILON_FRACTION * paths.grid.horizon);
    let n = paths.grid.n as f64;
    let first = libm::ceil(eps * n - 1e-9).max(1.0) as usize;
    let raw = raw_sums(paths);
    if first >= raw.rows() {
        return Err(Error::InsufficientData { needed: first + 1, got: raw.rows() });
    }
    let p = paths.p();
    let mut out = VechSeries::zeros(p, raw.times[first..].to_vec());
    for (o, i) in (first..raw.rows()).enumerate() {
        for k in 0..p {
            if raw.get(i, k, k) == 0.0 {
                return Err(Error::DegenerateDenominator(k + 1));
            }
        }
        for k in 0..p {
            for l in 0..=k {
                let v = if k == l {
                    1.0
                } else {
                    let r = raw.get(i, k, l) / (libm::sqrt(raw.get(i, k, k)) * libm::sqrt(raw.get(i, l, l)));
                    r.clamp(-1.0, 1.0)
                };
                out.set(o, k, l, v);
            }
        }
    }
    Ok(out)
}

/// Σ_{i≤⌊nt⌋}ΔY⁽ᵏ⁾ΔY⁽ˡ⁾ / Σ_{i≤⌊nT⌋}ΔY⁽ᵏ⁾ΔY⁽ˡ⁾ at every grid time; exactly 1 at T.
pub fn relative_covolatility(paths: &PathBundle) -> Result<VechSeries> {
    let raw = raw_sums(paths);
    let last = raw.rows() - 1;
    let p = paths.p();
    let mut out = VechSeries::zeros(p, raw.times.clone());
    for k in 0..p {
        for l in 0..=k {
            let total = raw.get(last, k, l);
            if total == 0.0 {
                return Err(Error::DegenerateDenominator(k + 1));
            }
            for i in 0..raw.rows() {
                out.set(i, k, l, raw.get(i, k, l) / total);
            }
        }
    }
    Ok(out)
}

fn raw_sums(paths: &PathBundle) -> VechSeries {
    running_products(paths.p(), times(paths), &paths.increments(), 1.0)
}
