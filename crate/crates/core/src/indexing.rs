//! Index maps between multi-indices and flat matrix coordinates.
//!
//! All public indices are 1-based to match the mathematical notation. The ν
//! and μ enumerations are lexicographic ascending and are the single source
//! of ordering for D, V and every serialized matrix.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(index: usize, max: usize) -> Result<()> {
    if index == 0 || index > max {
        return Err(Error::OutOfRange { index, max });
    }
    Ok(())
}

/// i ↦ (⌊(i−1)/p⌋+1, i − p⌊(i−1)/p⌋).
pub fn pair_from_flat(i: usize, p: usize) -> Result<(usize, usize)> {
    check(i, p * p)?;
    let b = (i - 1) / p;
    Ok((b + 1, i - p * b))
}

pub fn flat_from_pair(x: usize, y: usize, p: usize) -> Result<usize> {
    check(x, p)?;
    check(y, p)?;
    Ok((x - 1) * p + y)
}

/// All quadruples (r, m, q, w) ∈ {1..p}⁴ in lexicographic order; ν_s = list[s−1].
pub fn nu_enumerate(p: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(p.pow(4));
    for r in 1..=p {
        for m in 1..=p {
            for q in 1..=p {
                for w in 1..=p {
                    out.push([r, m, q, w]);
                }
            }
        }
    }
    out
}

/// Position s of a quadruple in `nu_enumerate`.
pub fn nu_index(nu: [usize; 4], p: usize) -> Result<usize> {
    nu.iter().try_for_each(|&v| check(v, p))?;
    Ok(nu.iter().fold(0, |acc, &v| acc * p + (v - 1)) + 1)
}

/// All pairs (m, w) ∈ {1..p}² in lexicographic order.
pub fn mu_enumerate(p: usize) -> Vec<[usize; 2]> {
    (1..=p).flat_map(|m| (1..=p).map(move |w| [m, w])).collect()
}

pub fn mu_index(mu: [usize; 2], p: usize) -> Result<usize> {
    check(mu[0], p)?;
    check(mu[1], p)?;
    Ok((mu[0] - 1) * p + mu[1])
}

/// Case I: z ↦ (ν_s, k, l) with b = ⌊(z−1)/p⁴⌋, s = z − b·p⁴, k = ⌊b/p⌋+1, l = b+1−p⌊b/p⌋.
pub fn case1_flat_map(z: usize, p: usize) -> Result<([usize; 4], usize, usize)> {
    let p4 = p.pow(4);
    check(z, p4 * p * p)?;
    let b = (z - 1) / p4;
    let s = z - b * p4;
    Ok((nu_enumerate_at(s, p), b / p + 1, b + 1 - p * (b / p)))
}

pub fn case1_flat_index(nu: [usize; 4], k: usize, l: usize, p: usize) -> Result<usize> {
    let s = nu_index(nu, p)?;
    Ok((flat_from_pair(k, l, p)? - 1) * p.pow(4) + s)
}

/// Scenario 2: z ↦ (μ_s, k, l) with blocks of p² entries.
pub fn scenario2_flat_map(z: usize, p: usize) -> Result<([usize; 2], usize, usize)> {
    let p2 = p * p;
    check(z, p2 * p2)?;
    let b = (z - 1) / p2;
    let s = z - b * p2;
    let mu = [(s - 1) / p + 1, (s - 1) % p + 1];
    Ok((mu, b / p + 1, b + 1 - p * (b / p)))
}

pub fn scenario2_flat_index(mu: [usize; 2], k: usize, l: usize, p: usize) -> Result<usize> {
    Ok((flat_from_pair(k, l, p)? - 1) * p * p + mu_index(mu, p)?)
}

fn nu_enumerate_at(s: usize, p: usize) -> [usize; 4] {
    let mut rem = s - 1;
    let mut out = [0; 4];
    for slot in out.iter_mut().rev() {
        *slot = rem % p + 1;
        rem /= p;
    }
    out
}

/// i ↦ (χ(i), ξ(i)), the row-major enumeration (1,1),(2,1),(2,2),(3,1),… of the
/// lower triangle, in exact integer arithmetic.
pub fn vech_chi_xi(i: usize) -> Result<(usize, usize)> {
    if i == 0 {
        return Err(Error::OutOfRange { index: 0, max: usize::MAX });
    }
    let m = ((8 * i as u64 - 7).isqrt() - 1) / 2;
    let m = m as usize;
    Ok((m + 1, i - m * (m + 1) / 2))
}

/// Inverse of `vech_chi_xi`: i = k(k−1)/2 + l for l ≤ k.
pub fn vech_index(k: usize, l: usize) -> Result<usize> {
    if l == 0 || l > k {
        return Err(Error::OutOfRange { index: l, max: k });
    }
    Ok(k * (k - 1) / 2 + l)
}

pub fn vech_len(p: usize) -> usize {
    p * (p + 1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexScheme {
    PairSquare,
    CaseIFull,
    CaseIVech,
    Scenario2Full,
    Scenario2Vech,
}

/// One decoded flat coordinate: statistic entry (k, l) plus the inner
/// Brownian index (ν for Case I, μ for scenario 2, empty for pairs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlatEntry {
    pub k: usize,
    pub l: usize,
    pub inner: Inner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Inner {
    None,
    Nu([usize; 4]),
    Mu([usize; 2]),
}

/// Travels with every serialized matrix so rows and columns can be decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMapDescriptor {
    pub p: usize,
    pub scheme: IndexScheme,
    pub flat_size: usize,
    /// Number of statistic entries (rows of V).
    pub statistic_dim: usize,
}

impl IndexMapDescriptor {
    pub fn new(p: usize, scheme: IndexScheme) -> Self {
        let (blocks, inner) = match scheme {
            IndexScheme::PairSquare => (p * p, 1),
            IndexScheme::CaseIFull => (p * p, p.pow(4)),
            IndexScheme::CaseIVech => (vech_len(p), p.pow(4)),
            IndexScheme::Scenario2Full => (p * p, p * p),
            IndexScheme::Scenario2Vech => (vech_len(p), p * p),
        };
        Self { p, scheme, flat_size: blocks * inner, statistic_dim: blocks }
    }

    /// Length of the σ-product row vector per statistic entry.
    pub fn block_size(&self) -> usize {
        self.flat_size / self.statistic_dim
    }

    pub fn is_vech(&self) -> bool {
        matches!(self.scheme, IndexScheme::CaseIVech | IndexScheme::Scenario2Vech)
    }

    /// Statistic entry (k, l) of row block b (1-based).
    pub fn block_pair(&self, b: usize) -> Result<(usize, usize)> {
        check(b, self.statistic_dim)?;
        if self.is_vech() {
            vech_chi_xi(b)
        } else {
            pair_from_flat(b, self.p)
        }
    }

    pub fn decode(&self, z: usize) -> Result<FlatEntry> {
        check(z, self.flat_size)?;
        let p = self.p;
        Ok(match self.scheme {
            IndexScheme::PairSquare => {
                let (k, l) = pair_from_flat(z, p)?;
                FlatEntry { k, l, inner: Inner::None }
            }
            IndexScheme::CaseIFull => {
                let (nu, k, l) = case1_flat_map(z, p)?;
                FlatEntry { k, l, inner: Inner::Nu(nu) }
            }
            IndexScheme::Scenario2Full => {
                let (mu, k, l) = scenario2_flat_map(z, p)?;
                FlatEntry { k, l, inner: Inner::Mu(mu) }
            }
            IndexScheme::CaseIVech | IndexScheme::Scenario2Vech => {
                let bs = self.block_size();
                let b = (z - 1) / bs;
                let s = z - b * bs;
                let (k, l) = vech_chi_xi(b + 1)?;
                let inner = if self.scheme == IndexScheme::CaseIVech {
                    Inner::Nu(nu_enumerate_at(s, p))
                } else {
                    Inner::Mu([(s - 1) / p + 1, (s - 1) % p + 1])
                };
                FlatEntry { k, l, inner }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_at_matches_enumeration() {
        for p in 1..=3 {
            for (s, nu) in nu_enumerate(p).into_iter().enumerate() {
                assert_eq!(nu_enumerate_at(s + 1, p), nu);
            }
        }
    }
}
