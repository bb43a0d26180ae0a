//! Scaling factors τₙ: the standard deviation (or a dominating order of it)
//! of one increment, in every regime the limit theorems use.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::validate_partition;
use crate::kernel::{increment_covariance, GammaKernel, KernelSpec};
use crate::quad::TanhSinh;
use crate::simulate::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// τ⁽ʲ⁾ per Gaussian-core component.
    CaseI,
    /// τ^{(k,r)} per kernel cell, for the per-term Case I BSS statistic.
    CaseITriple,
    /// τ^{(β)} per partition block.
    Partition,
    CaseIIBar,
    CaseIITildeTheoretical,
    CaseIITildeEmpirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauBarMode {
    /// sqrt(E[(Σ_r Δ₁G^{(k,r,r)})²]).
    SumDiagonal,
    /// max_r sqrt(E[(Δ₁G^{(k,r,r)})²]).
    MaxOverR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Kernel,
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    pub regime: Regime,
    pub n: usize,
    /// Indexed per regime: components, cells k·p + r, or blocks.
    pub values: Vec<f64>,
    pub provenance: Provenance,
    pub mode: Option<TauBarMode>,
    pub partition: Option<Vec<Vec<usize>>>,
    pub labels: Vec<String>,
}

impl ScalingFactors {
    /// τ applied to component k of the observed process. Not defined for
    /// `CaseITriple`, whose factors act on the per-term pieces.
    pub fn component(&self, k: usize) -> Result<f64> {
        match self.regime {
            Regime::CaseITriple => Err(Error::RegimeMismatch("triple scaling acts on per-term pieces".into())),
            Regime::Partition => {
                let blocks = self.partition.as_ref().expect("partition regime carries its blocks");
                let b = blocks.iter().position(|bl| bl.contains(&k)).ok_or(Error::OutOfRange { index: k + 1, max: 0 })?;
                Ok(self.values[b])
            }
            _ => self.values.get(k).copied().ok_or(Error::OutOfRange { index: k + 1, max: self.values.len() }),
        }
    }

    pub fn components(&self, p: usize) -> Result<Vec<f64>> {
        (0..p).map(|k| self.component(k)).collect()
    }
}

fn atom_variance(q: &TanhSinh, g: &GammaKernel, n: usize) -> Result<f64> {
    increment_covariance(q, g, g, 1.0 / n as f64, 0)
}

fn checked(values: Vec<f64>) -> Result<Vec<f64>> {
    match values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        Some(i) => Err(Error::DegenerateVariance(i + 1)),
        None => Ok(values),
    }
}

/// Var(Δ₁ g^{(k,r)}) per cell (k, r), None where the kernel is absent.
fn cell_variances(spec: &KernelSpec, n: usize) -> Result<Vec<Vec<Option<f64>>>> {
    let q = TanhSinh::default();
    let p = spec.p();
    (0..p)
        .map(|k| (0..p).map(|r| spec.get(k, r).map(|g| atom_variance(&q, g, n)).transpose()).collect())
        .collect()
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidGrid("n must be at least 1".into()));
    }
    Ok(())
}

/// Case I: τ⁽ᵏ⁾ = sqrt(Σ_l Var Δ₁(∫g^{(k,l)}dW⁽ˡ⁾)) per component.
pub fn tau_case1(spec: &KernelSpec, n: usize) -> Result<ScalingFactors> {
    check_n(n)?;
    let cells = cell_variances(spec, n)?;
    let values = cells.iter().map(|row| libm::sqrt(row.iter().flatten().sum())).collect();
    Ok(ScalingFactors {
        regime: Regime::CaseI,
        n,
        values: checked(values)?,
        provenance: Provenance::Kernel,
        mode: None,
        partition: None,
        labels: (1..=spec.p()).map(|k| format!("tau({k})")).collect(),
    })
}

/// Case I per-cell τ^{(k,r)} (the same for every driving measure m), index k·p + r.
/// Absent kernel cells get 1: their pieces are identically zero.
pub fn tau_case1_triple(spec: &KernelSpec, n: usize) -> Result<ScalingFactors> {
    check_n(n)?;
    let p = spec.p();
    let cells = cell_variances(spec, n)?;
    let mut values = Vec::with_capacity(p * p);
    let mut labels = Vec::with_capacity(p * p);
    for (k, row) in cells.iter().enumerate() {
        for (r, v) in row.iter().enumerate() {
            values.push(v.map_or(1.0, libm::sqrt));
            labels.push(format!("tau({},{})", k + 1, r + 1));
        }
    }
    Ok(ScalingFactors {
        regime: Regime::CaseITriple,
        n,
        values: checked(values)?,
        provenance: Provenance::Kernel,
        mode: None,
        partition: None,
        labels,
    })
}

/// τ^{(β)} = sqrt(Var Σ_{i∈β} Δ₁G⁽ⁱ⁾) per block (zero-based components).
pub fn tau_partition(spec: &KernelSpec, n: usize, partition: &[Vec<usize>]) -> Result<ScalingFactors> {
    check_n(n)?;
    let p = spec.p();
    validate_partition(partition, p)?;
    let q = TanhSinh::default();
    let dt = 1.0 / n as f64;
    let mut values = Vec::with_capacity(partition.len());
    for block in partition {
        let mut var = 0.0;
        for &i in block {
            for &j in block {
                for l in 0..p {
                    if let (Some(a), Some(b)) = (spec.get(i, l), spec.get(j, l)) {
                        var += increment_covariance(&q, a, b, dt, 0)?;
                    }
                }
            }
        }
        values.push(libm::sqrt(var));
    }
    Ok(ScalingFactors {
        regime: Regime::Partition,
        n,
        values: checked(values)?,
        provenance: Provenance::Kernel,
        mode: None,
        partition: Some(partition.to_vec()),
        labels: (1..=partition.len()).map(|b| format!("tau(block {b})")).collect(),
    })
}

/// τ̄⁽ᵏ⁾ for the matrix-product variant Y under independent driving measures.
pub fn tau_bar(spec: &KernelSpec, n: usize, mode: TauBarMode) -> Result<ScalingFactors> {
    check_n(n)?;
    let cells = cell_variances(spec, n)?;
    let values = cells
        .iter()
        .map(|row| {
            let vs = row.iter().flatten();
            match mode {
                TauBarMode::SumDiagonal => libm::sqrt(vs.sum()),
                TauBarMode::MaxOverR => vs.fold(0.0, |a: f64, &v| a.max(libm::sqrt(v))),
            }
        })
        .collect();
    Ok(ScalingFactors {
        regime: Regime::CaseIIBar,
        n,
        values: checked(values)?,
        provenance: Provenance::Kernel,
        mode: Some(mode),
        partition: None,
        labels: (1..=spec.p()).map(|k| format!("taubar({k})")).collect(),
    })
}

/// τ̃⁽ᵏ⁾ = sqrt(Σ_m Var Δ₁(∫g^{(k,m)}dW⁽ᵐ⁾)·E[(σ^{(k,m)})²]).
pub fn tau_tilde_theoretical(spec: &KernelSpec, second_moments: &[Vec<f64>], n: usize) -> Result<ScalingFactors> {
    check_n(n)?;
    let p = spec.p();
    if second_moments.len() != p || second_moments.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: second_moments.len() });
    }
    let cells = cell_variances(spec, n)?;
    let values = (0..p)
        .map(|k| libm::sqrt((0..p).map(|m| cells[k][m].unwrap_or(0.0) * second_moments[k][m]).sum()))
        .collect();
    Ok(ScalingFactors {
        regime: Regime::CaseIITildeTheoretical,
        n,
        values: checked(values)?,
        provenance: Provenance::Kernel,
        mode: None,
        partition: None,
        labels: (1..=p).map(|k| format!("tautilde({k})")).collect(),
    })
}

/// Minimum number of increments for the empirical τ̃.
pub const MIN_EMPIRICAL_INCREMENTS: usize = 30;

/// Root-mean-square of observed increments per component.
pub fn tau_tilde_empirical(data: &PathBundle) -> Result<ScalingFactors> {
    let n_inc = data.steps();
    if n_inc < MIN_EMPIRICAL_INCREMENTS {
        return Err(Error::InsufficientData { needed: MIN_EMPIRICAL_INCREMENTS, got: n_inc });
    }
    let p = data.p();
    let values = (0..p)
        .map(|k| libm::sqrt((1..=n_inc).map(|i| {
                    let d = data.increment(i, k);
                    d * d
                })
                .sum::<f64>() / n_inc as f64))
        .collect();
    Ok(ScalingFactors {
        regime: Regime::CaseIITildeEmpirical,
        n: data.grid.n,
        values: checked(values)?,
        provenance: Provenance::Data,
        mode: None,
        partition: None,
        labels: data.labels.iter().map(|l| format!("tautilde({l})")).collect(),
    })
}
