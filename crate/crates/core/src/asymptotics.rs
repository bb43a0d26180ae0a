//! Limit covariances of the realised-covariation CLTs.
//!
//! Every regime is described by a [`Design`]: a family of Gaussian-core
//! members, a per-member normaliser τ, and flat coordinates z ↦ (x, y) with the
//! σ cells whose product multiplies ΔA_x·ΔA_y. Then
//!
//!   D_{(x,y),(z,w)} = Σ_{|h|<N} (1 − |h|/N)·[ρ_xz(h)ρ_yw(h) + ρ_xw(h)ρ_yz(h)]
//!
//! with ρ_ab(h) = Cov(Δ₁A_a, Δ₁₊ₕA_b)/(τ_a τ_b), and the statistic covariance is
//! ∫V_s D V_sᵀ ds.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, LagCovariances, Target};
use crate::indexing::{IndexMapDescriptor, IndexScheme, Inner};
use crate::kernel::KernelSpec;
use crate::scaling::{self, ScalingFactors, TauBarMode};
use crate::simulate::VolatilityPath;
use crate::util::par_map;

/// Largest flat dimension assembled densely (Case I p = 3 vech is 486).
pub const FLAT_CAP: usize = 600;

/// Minimum eigenvalue tolerated (and clipped to zero) by the PSD repair.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalingChoice {
    CaseI,
    Partition(Vec<Vec<usize>>),
    CaseITriple,
    Bar(TauBarMode),
    /// τ̃ from the given E[(σ^{(k,m)})²].
    TildeTheoretical(Vec<Vec<f64>>),
}

/// Flat coordinate: members x, y and the σ cells (r, m), (q, w) of the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
    pub cells: Option<[(usize, usize); 2]>,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub spec: KernelSpec,
    pub descriptor: IndexMapDescriptor,
    pub scaling: ScalingChoice,
    family: Family,
    coords: Vec<Coord>,
}

impl Design {
    /// Gaussian core, statistic (ΔG⁽ᵏ⁾ΔG⁽ˡ⁾)_{k,l} over p² entries, Case I or partition scaling.
    pub fn gaussian(spec: &KernelSpec, scaling: ScalingChoice) -> Result<Self> {
        if !matches!(scaling, ScalingChoice::CaseI | ScalingChoice::Partition(_)) {
            return Err(Error::RegimeMismatch("the Gaussian core uses Case I or partition scaling".into()));
        }
        Self::build(spec, IndexMapDescriptor::new(spec.p(), IndexScheme::PairSquare), scaling, Target::Components)
    }

    /// Variant Y, per-term pieces scaled by τ^{(k,r)}.
    pub fn case1_bss(spec: &KernelSpec, vech: bool) -> Result<Self> {
        let scheme = if vech { IndexScheme::CaseIVech } else { IndexScheme::CaseIFull };
        Self::build(spec, IndexMapDescriptor::new(spec.p(), scheme), ScalingChoice::CaseITriple, Target::Triples)
    }

    /// Variant Y scaled by τ̄⁽ᵏ⁾.
    pub fn bar(spec: &KernelSpec, mode: TauBarMode, vech: bool) -> Result<Self> {
        let scheme = if vech { IndexScheme::CaseIVech } else { IndexScheme::CaseIFull };
        Self::build(spec, IndexMapDescriptor::new(spec.p(), scheme), ScalingChoice::Bar(mode), Target::Triples)
    }

    /// Variant X scaled by theoretical τ̃⁽ᵏ⁾.
    pub fn scenario2(spec: &KernelSpec, second_moments: Vec<Vec<f64>>, vech: bool) -> Result<Self> {
        let scheme = if vech { IndexScheme::Scenario2Vech } else { IndexScheme::Scenario2Full };
        Self::build(
            spec,
            IndexMapDescriptor::new(spec.p(), scheme),
            ScalingChoice::TildeTheoretical(second_moments),
            Target::Pairs,
        )
    }

    fn build(spec: &KernelSpec, descriptor: IndexMapDescriptor, scaling: ScalingChoice, target: Target) -> Result<Self> {
        if descriptor.flat_size > FLAT_CAP {
            return Err(Error::SizeCap { size: descriptor.flat_size, cap: FLAT_CAP });
        }
        let p = spec.p();
        let family = Family::new(spec, target)?;
        let mut coords = Vec::with_capacity(descriptor.flat_size);
        for z in 1..=descriptor.flat_size {
            let e = descriptor.decode(z)?;
            let (k, l) = (e.k - 1, e.l - 1);
            coords.push(match e.inner {
                Inner::None => Coord { x: k, y: l, cells: None },
                Inner::Nu([r, m, q, w]) => {
                    let (r, m, q, w) = (r - 1, m - 1, q - 1, w - 1);
                    Coord { x: (k * p + r) * p + m, y: (l * p + q) * p + w, cells: Some([(r, m), (q, w)]) }
                }
                Inner::Mu([m, w]) => {
                    let (m, w) = (m - 1, w - 1);
                    Coord { x: k * p + m, y: l * p + w, cells: Some([(k, m), (l, w)]) }
                }
            });
        }
        let d = Self { spec: spec.clone(), descriptor, scaling, family, coords };
        // Fail early on invalid partitions or moments.
        d.scaling_at(1)?;
        Ok(d)
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn scaling_at(&self, n: usize) -> Result<ScalingFactors> {
        match &self.scaling {
            ScalingChoice::CaseI => scaling::tau_case1(&self.spec, n),
            ScalingChoice::Partition(b) => scaling::tau_partition(&self.spec, n, b),
            ScalingChoice::CaseITriple => scaling::tau_case1_triple(&self.spec, n),
            ScalingChoice::Bar(mode) => scaling::tau_bar(&self.spec, n, *mode),
            ScalingChoice::TildeTheoretical(m) => scaling::tau_tilde_theoretical(&self.spec, m, n),
        }
    }

    fn member_norms(&self, sf: &ScalingFactors) -> Result<Vec<f64>> {
        let p = self.spec.p();
        Ok(match self.family.target {
            Target::Components => sf.components(p)?,
            // Member (k·p + r)·p + m: triple τ^{(k,r)}, or τ̄⁽ᵏ⁾.
            Target::Triples => (0..p * p * p)
                .map(|i| match self.scaling {
                    ScalingChoice::CaseITriple => Ok(sf.values[i / p]),
                    _ => sf.component(i / (p * p)),
                })
                .collect::<Result<_>>()?,
            Target::Pairs => (0..p * p).map(|i| sf.component(i / p)).collect::<Result<_>>()?,
            _ => unreachable!("designs are built from components, triples or pairs"),
        })
    }

    /// Lag covariances and normalisers at resolution n, lags up to `max_lag`.
    pub fn at(&self, n: usize, max_lag: usize) -> Result<DesignAt<'_>> {
        let scaling = self.scaling_at(n)?;
        let norms = self.member_norms(&scaling)?;
        let lags = LagCovariances::compute(&self.family, n as f64, max_lag)?;
        Ok(DesignAt { design: self, n, scaling, norms, lags })
    }
}

/// A design evaluated at one resolution.
#[derive(Debug, Clone)]
pub struct DesignAt<'a> {
    pub design: &'a Design,
    pub n: usize,
    pub scaling: ScalingFactors,
    norms: Vec<f64>,
    lags: LagCovariances,
}

impl DesignAt<'_> {
    /// ρ_ab(h) between members.
    pub fn rho(&self, a: usize, b: usize, h: i64) -> f64 {
        self.lags.cov(a, b, h) / (self.norms[a] * self.norms[b])
    }

    /// Unnormalised Σ_h f(h)[c_xz c_yw + c_xw c_yz] over |h| ≤ K.
    fn raw_entry(&self, a: &Coord, b: &Coord, fejer: usize) -> f64 {
        let k = self.lags.max_lag;
        let weight = |h: usize| 1.0 - (h as f64 - k as f64).abs() / fejer as f64;
        let mut acc = 0.0;
        for (s1, s2) in [(self.lags.series(a.x, b.x), self.lags.series(a.y, b.y)), (self.lags.series(a.x, b.y), self.lags.series(a.y, b.x))] {
            if let (Some(s1), Some(s2)) = (s1, s2) {
                acc += s1.iter().zip(s2).enumerate().map(|(h, (u, v))| weight(h) * u * v).sum::<f64>();
            }
        }
        acc
    }

    /// D with Fejér length N (K must be below N).
    pub fn d_matrix(&self, fejer: usize) -> Result<DMatrix<f64>> {
        if fejer <= self.lags.max_lag {
            return Err(Error::InsufficientLags { needed: fejer, got: self.lags.max_lag + 1 });
        }
        let coords = &self.design.coords;
        let f = coords.len();
        let rows = par_map(f, |a| {
            (a..f)
                .map(|b| {
                    let (ca, cb) = (&coords[a], &coords[b]);
                    let norm = self.norms[ca.x] * self.norms[ca.y] * self.norms[cb.x] * self.norms[cb.y];
                    self.raw_entry(ca, cb, fejer) / norm
                })
                .collect::<Vec<_>>()
        });
        let mut m = DMatrix::zeros(f, f);
        for (a, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                m[(a, a + j)] = v;
                m[(a + j, a)] = v;
            }
        }
        Ok(m)
    }

    /// Lag-0 weights ρ_xy(0) of each statistic block, with their σ cells.
    pub fn bias_weights(&self) -> Vec<Vec<BiasWeight>> {
        let bs = self.design.descriptor.block_size();
        self.design
            .coords
            .chunks(bs)
            .map(|block| {
                block
                    .iter()
                    .filter_map(|c| {
                        let w = self.rho(c.x, c.y, 0);
                        (w != 0.0).then_some(BiasWeight { cells: c.cells, weight: w })
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasWeight {
    /// σ cells of the product; None for the Gaussian core (σ ≡ 1).
    pub cells: Option<[(usize, usize); 2]>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DDiagnostics {
    pub n_sequence: Vec<usize>,
    pub max_lags: Vec<usize>,
    /// Fejér length N used at each n.
    pub fejer: Vec<usize>,
    /// Per entry (row-major): |D(n_last) − D(n_prev)| / sqrt(D_aa D_bb).
    pub entry_deltas: Vec<f64>,
    pub max_delta: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub extrapolated: bool,
    /// Smallest eigenvalue before any repair.
    pub min_eigenvalue: f64,
    pub psd_clipped: bool,
}

#[derive(Debug, Clone)]
pub struct AsymptoticCovariance {
    pub descriptor: IndexMapDescriptor,
    pub values: DMatrix<f64>,
    pub diagnostics: DDiagnostics,
}

impl AsymptoticCovariance {
    pub fn require_converged(self) -> Result<Self> {
        if self.diagnostics.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { delta: self.diagnostics.max_delta, tolerance: self.diagnostics.tolerance })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub n_sequence: Vec<usize>,
    pub lag_cap: usize,
    pub tolerance: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { n_sequence: vec![1 << 10, 1 << 12, 1 << 14], lag_cap: 1 << 14, tolerance: 1e-3 }
    }
}

fn psd_repair(mut m: DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool)> {
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok((m, min, false));
    }
    if min < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    Ok((sym, min, true))
}

/// Exact finite-sample D at resolution n for N = `fejer` increments (K = N − 1).
pub fn d_finite(design: &Design, n: usize, fejer: usize) -> Result<AsymptoticCovariance> {
    if fejer == 0 {
        return Err(Error::InvalidGrid("no increments".into()));
    }
    let at = design.at(n, fejer - 1)?;
    let m = at.d_matrix(fejer)?;
    let f = m.nrows();
    let (values, min_eigenvalue, psd_clipped) = psd_repair(m)?;
    Ok(AsymptoticCovariance {
        descriptor: design.descriptor,
        values,
        diagnostics: DDiagnostics {
            n_sequence: vec![n],
            max_lags: vec![fejer - 1],
            fejer: vec![fejer],
            entry_deltas: vec![0.0; f * f],
            max_delta: 0.0,
            tolerance: 0.0,
            converged: true,
            extrapolated: false,
            min_eigenvalue,
            psd_clipped,
        },
    })
}

/// n → ∞ approximation: D at each n of the sequence (N = n, K = min(n − 1, cap)),
/// extrapolated by Aitken's Δ² when the last three terms contract geometrically.
pub fn d_limit(design: &Design, opts: &LimitOptions) -> Result<AsymptoticCovariance> {
    if opts.n_sequence.len() < 2 {
        return Err(Error::InvalidGrid("the n-sequence needs at least two resolutions".into()));
    }
    let mut terms = Vec::with_capacity(opts.n_sequence.len());
    let mut max_lags = Vec::new();
    for &n in &opts.n_sequence {
        let k = (n - 1).min(opts.lag_cap);
        max_lags.push(k);
        terms.push(design.at(n, k)?.d_matrix(n)?);
    }
    let f = terms[0].nrows();
    let last = &terms[terms.len() - 1];
    let prev = &terms[terms.len() - 2];
    let mut entry_deltas = Vec::with_capacity(f * f);
    for a in 0..f {
        for b in 0..f {
            let scale = libm::sqrt((last[(a, a)] * last[(b, b)]).abs()).max(f64::MIN_POSITIVE);
            entry_deltas.push((last[(a, b)] - prev[(a, b)]).abs() / scale);
        }
    }
    let max_delta = entry_deltas.iter().copied().fold(0.0, f64::max);
    let mut values = last.clone();
    let mut extrapolated = false;
    if terms.len() >= 3 {
        let d0 = &terms[terms.len() - 3];
        for a in 0..f {
            for b in 0..f {
                let d1 = prev[(a, b)] - d0[(a, b)];
                let d2 = last[(a, b)] - prev[(a, b)];
                if d1 != 0.0 {
                    let q = d2 / d1;
                    if q > 0.0 && q < 0.9 {
                        values[(a, b)] = last[(a, b)] + d2 * q / (1.0 - q);
                        extrapolated = true;
                    }
                }
            }
        }
        values = (&values + values.transpose()) * 0.5;
    }
    let (values, min_eigenvalue, psd_clipped) = psd_repair(values)?;
    Ok(AsymptoticCovariance {
        descriptor: design.descriptor,
        values,
        diagnostics: DDiagnostics {
            n_sequence: opts.n_sequence.clone(),
            max_lags,
            fejer: opts.n_sequence.clone(),
            entry_deltas,
            max_delta,
            tolerance: opts.tolerance,
            converged: max_delta < opts.tolerance,
            extrapolated,
            min_eigenvalue,
            psd_clipped,
        },
    })
}

/// D for the Gaussian core (Case I or partition scaling); fails if not converged.
pub fn d_gaussian(spec: &KernelSpec, scaling: ScalingChoice, opts: &LimitOptions) -> Result<AsymptoticCovariance> {
    d_limit(&Design::gaussian(spec, scaling)?, opts)?.require_converged()
}

/// D for the per-term Case I BSS statistic. Full form for p ≤ 2, vech up to p = 3.
pub fn d_case1_bss(spec: &KernelSpec, vech: bool, opts: &LimitOptions) -> Result<AsymptoticCovariance> {
    d_limit(&Design::case1_bss(spec, vech)?, opts)?.require_converged()
}

/// D for variant X under theoretical τ̃.
pub fn d_scenario2(
    spec: &KernelSpec,
    second_moments: Vec<Vec<f64>>,
    vech: bool,
    opts: &LimitOptions,
) -> Result<AsymptoticCovariance> {
    d_limit(&Design::scenario2(spec, second_moments, vech)?, opts)?.require_converged()
}

/// V_s: one row per statistic entry carrying its σ-product vector in its own
/// column block (ordered by the ν/μ enumeration), zeros elsewhere.
pub fn v_matrix(sigma: &[Vec<f64>], descriptor: &IndexMapDescriptor) -> Result<DMatrix<f64>> {
    let p = descriptor.p;
    if sigma.len() != p || sigma.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: sigma.len() });
    }
    if let Some(v) = sigma.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("non-finite volatility {v}")));
    }
    let bs = descriptor.block_size();
    let mut v = DMatrix::zeros(descriptor.statistic_dim, descriptor.flat_size);
    for z in 1..=descriptor.flat_size {
        let e = descriptor.decode(z)?;
        let row = (z - 1) / bs;
        v[(row, z - 1)] = match e.inner {
            Inner::None => 1.0,
            Inner::Nu([r, m, q, w]) => sigma[r - 1][m - 1] * sigma[q - 1][w - 1],
            Inner::Mu([m, w]) => sigma[e.k - 1][m - 1] * sigma[e.l - 1][w - 1],
        };
    }
    Ok(v)
}

/// Covariance of the limit ∫₀ᵗV_s D^{1/2}dB_s over the statistic entries.
#[derive(Debug, Clone)]
pub struct StatisticCovariance {
    pub descriptor: IndexMapDescriptor,
    pub t: f64,
    pub matrix: DMatrix<f64>,
}

impl StatisticCovariance {
    /// Row of statistic entry (k, l) (zero-based, either order for vech).
    pub fn index(&self, k: usize, l: usize) -> Result<usize> {
        let d = &self.descriptor;
        (0..d.statistic_dim)
            .find(|&b| {
                let (x, y) = d.block_pair(b + 1).expect("block in range");
                if d.is_vech() {
                    (x - 1, y - 1) == (k.max(l), k.min(l))
                } else {
                    (x - 1, y - 1) == (k, l)
                }
            })
            .ok_or(Error::OutOfRange { index: k * d.p + l + 1, max: d.statistic_dim })
    }
}

/// ∫₀ᵗ V_s D V_sᵀ ds by the trapezoid rule on σ rows 0..=`upto`, spacing `dt`.
pub fn statistic_covariance(
    d: &AsymptoticCovariance,
    vol: &VolatilityPath,
    dt: f64,
    upto: usize,
) -> Result<StatisticCovariance> {
    let p = d.descriptor.p;
    if vol.p != p {
        return Err(Error::DimensionMismatch { expected: p, got: vol.p });
    }
    if upto >= vol.rows() {
        return Err(Error::DimensionMismatch { expected: upto + 1, got: vol.rows() });
    }
    let dim = d.descriptor.statistic_dim;
    let mut acc = DMatrix::zeros(dim, dim);
    let sigma_at = |i: usize| -> Vec<Vec<f64>> { (0..p).map(|r| (0..p).map(|m| vol.get(i, r, m)).collect()).collect() };
    for i in 0..=upto {
        if upto == 0 {
            break;
        }
        let w = if i == 0 || i == upto { 0.5 * dt } else { dt };
        let v = v_matrix(&sigma_at(i), &d.descriptor)?;
        acc += (&v * &d.values * v.transpose()) * w;
    }
    let matrix = (&acc + acc.transpose()) * 0.5;
    Ok(StatisticCovariance { descriptor: d.descriptor, t: upto as f64 * dt, matrix })
}

/// t·V D Vᵀ for constant σ.
pub fn statistic_covariance_constant(d: &AsymptoticCovariance, sigma: &[Vec<f64>], t: f64) -> Result<StatisticCovariance> {
    let v = v_matrix(sigma, &d.descriptor)?;
    let m = (&v * &d.values * v.transpose()) * t;
    Ok(StatisticCovariance { descriptor: d.descriptor, t, matrix: (&m + m.transpose()) * 0.5 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioKind {
    CorrelationRatio,
    RelativeCovolatility,
}

/// How the limit rows B^{(k,l)} entering one ratio are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioCoupling {
    /// Rows treated as independent (cross-row covariances dropped).
    Independent,
    /// Full covariance of the rows from ∫VDVᵀ.
    Joint,
}

/// Covariance of the √n-centred ratio limits for the given entries.
///
/// `r_t`/`r_terminal` are the p×p centring values R_t and R_T. For the
/// correlation ratio only `sigma_t` is used; for the relative covolatility the
/// T-integral shares the t-integral's increments, so Cov(Z_t, Z_T) = Var(Z_t).
#[allow(clippy::too_many_arguments)]
pub fn ratio_limit_covariance(
    kind: RatioKind,
    coupling: RatioCoupling,
    entries: &[(usize, usize)],
    sigma_t: &StatisticCovariance,
    sigma_terminal: Option<&StatisticCovariance>,
    r_t: &[Vec<f64>],
    r_terminal: Option<&[Vec<f64>]>,
) -> Result<DMatrix<f64>> {
    let dim = sigma_t.descriptor.statistic_dim;
    let cov_of = |m: &DMatrix<f64>| match coupling {
        RatioCoupling::Joint => m.clone(),
        RatioCoupling::Independent => DMatrix::from_diagonal(&m.diagonal()),
    };
    let st = cov_of(&sigma_t.matrix);
    // Coefficient vectors on Z_t (and on Z_T) for each requested entry.
    let mut ct = Vec::with_capacity(entries.len());
    let mut cterm = Vec::with_capacity(entries.len());
    for &(k, l) in entries {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        match kind {
            RatioKind::CorrelationRatio => {
                let (rkk, rll, rkl) = (r_t[k][k], r_t[l][l], r_t[k][l]);
                if !(rkk > 0.0 && rll > 0.0) {
                    return Err(Error::DegenerateLimit(format!("R({0},{0}) or R({1},{1}) is not positive", k + 1, l + 1)));
                }
                let s = 1.0 / libm::sqrt(rkk * rll);
                a[sigma_t.index(k, l)?] += s;
                a[sigma_t.index(k, k)?] -= 0.5 * s * rkl / rkk;
                a[sigma_t.index(l, l)?] -= 0.5 * s * rkl / rll;
            }
            RatioKind::RelativeCovolatility => {
                let rt = r_terminal.ok_or(Error::MissingVolatility)?;
                let big = rt[k][l];
                if big == 0.0 || !big.is_finite() {
                    return Err(Error::DegenerateLimit(format!("R_T({},{}) = 0", k + 1, l + 1)));
                }
                let i = sigma_t.index(k, l)?;
                a[i] += 1.0 / big;
                b[i] -= r_t[k][l] / (big * big);
            }
        }
        ct.push(a);
        cterm.push(b);
    }
    let e = entries.len();
    let mut out = DMatrix::zeros(e, e);
    let quad = |u: &[f64], m: &DMatrix<f64>, v: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..dim {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..dim {
                s += u[i] * m[(i, j)] * v[j];
            }
        }
        s
    };
    let sterm = match (kind, sigma_terminal) {
        (RatioKind::RelativeCovolatility, Some(s)) => Some(cov_of(&s.matrix)),
        (RatioKind::RelativeCovolatility, None) => return Err(Error::MissingVolatility),
        _ => None,
    };
    for i in 0..e {
        for j in 0..e {
            let mut v = quad(&ct[i], &st, &ct[j]);
            if let Some(sterm) = &sterm {
                // Cov(Z_t, Z_T) = Var(Z_t): cross terms use the t-covariance.
                v += quad(&ct[i], &st, &cterm[j]) + quad(&cterm[i], &st, &ct[j]);
                v += quad(&cterm[i], sterm, &cterm[j]);
            }
            out[(i, j)] = v;
        }
    }
    Ok((&out + out.transpose()) * 0.5)
}
