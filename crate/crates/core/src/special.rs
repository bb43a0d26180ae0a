//! Gamma-function products and Kummer series used by the gamma-kernel closed forms.

use alloc::format;

use crate::error::{Error, Result};

/// Distance below which an argument counts as sitting on a Gamma pole.
pub const POLE_GUARD: f64 = 1e-6;

fn near_pole(x: f64) -> bool {
    x <= 0.0 && (x - libm::round(x)).abs() < POLE_GUARD
}

/// Π Γ(num) / Π Γ(den), evaluated through log-Gamma with sign tracking.
pub fn gamma_ratio(num: &[f64], den: &[f64]) -> Result<f64> {
    let mut log = 0.0;
    let mut sign = 1i32;
    for (&x, flip) in num.iter().map(|x| (x, 1.0)).chain(den.iter().map(|x| (x, -1.0))) {
        if near_pole(x) {
            return Err(Error::Domain(format!("Gamma pole at {x}")));
        }
        let (lg, s) = libm::lgamma_r(x);
        log += flip * lg;
        sign *= s;
    }
    Ok(sign as f64 * libm::exp(log))
}

/// Truncation control for the confluent hypergeometric series.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeriesControl {
    /// Acceptable relative error from truncation and from cancellation.
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_terms: 2000 }
    }
}

/// Kummer's M(a, b, z) = Σ (a)_r/(b)_r z^r/r!.
#[derive(Debug, Clone, Copy)]
pub struct KummerSum {
    pub value: f64,
    /// Σ|terms|: the magnitude that rounding errors scale with.
    pub abs_sum: f64,
    /// Geometric bound on the discarded tail.
    pub tail_bound: f64,
    pub terms: usize,
}

pub fn kummer_m(a: f64, b: f64, z: f64, ctl: &SeriesControl) -> Result<KummerSum> {
    if near_pole(b) {
        return Err(Error::Domain(format!("Kummer M with nonpositive integer b = {b}")));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut abs_sum = 1.0;
    for r in 0..ctl.max_terms {
        let rf = r as f64;
        term *= (a + rf) * z / ((b + rf) * (rf + 1.0));
        sum += term;
        abs_sum += term.abs();
        // Once the term ratio is below one and shrinking the tail is geometric.
        let q = ((a + rf + 1.0) * z / ((b + rf + 1.0) * (rf + 2.0))).abs();
        if q < 1.0 && rf + 1.0 > z.abs() - b.min(0.0) {
            let tail = term.abs() * q / (1.0 - q);
            if tail <= f64::EPSILON * sum.abs() || term == 0.0 {
                return Ok(KummerSum { value: sum, abs_sum, tail_bound: tail, terms: r + 1 });
            }
        }
    }
    Err(Error::SeriesDiverged(format!("M({a}, {b}, {z}) needs more than {} terms", ctl.max_terms)))
}
