//! Gaussian-core families: linear combinations of the atoms ∫g(t−s)dW⁽ᵐ⁾_s and
//! the lagged covariances of their increments.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{increment_covariance, GammaKernel, KernelSpec};
use crate::quad::TanhSinh;
use crate::util::par_map;

/// Which family of Gaussian-core processes is stacked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// G⁽ᵏ⁾ = Σ_l ∫g^{(k,l)}dW⁽ˡ⁾, member k.
    Components,
    /// G^{(k,r;m)} = ∫g^{(k,r)}dW⁽ᵐ⁾, member (k·p + r)·p + m.
    Triples,
    /// ∫g^{(k,m)}dW⁽ᵐ⁾, member k·p + m.
    Pairs,
    /// Σ_{i∈block} G⁽ⁱ⁾ for each block of a partition of the components.
    Blocks(Vec<Vec<usize>>),
    /// A caller-chosen list of atoms.
    Atoms,
}

/// ∫g(t−s)dW⁽ᵐ⁾_s for one kernel and one driving measure (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub kernel: GammaKernel,
    pub measure: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub label: String,
    /// (atom index, coefficient); empty for an identically zero member.
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub p: usize,
    pub target: Target,
    pub atoms: Vec<Atom>,
    pub members: Vec<Member>,
}

impl Family {
    pub fn new(spec: &KernelSpec, target: Target) -> Result<Self> {
        let p = spec.p();
        let mut b = Builder::default();
        match &target {
            Target::Components => {
                for k in 0..p {
                    let terms = (0..p).filter_map(|l| spec.get(k, l).map(|g| (b.atom(*g, l), 1.0))).collect();
                    b.members.push(Member { label: format!("G({})", k + 1), terms });
                }
            }
            Target::Triples => {
                for k in 0..p {
                    for r in 0..p {
                        for m in 0..p {
                            let terms = spec.get(k, r).map(|g| (b.atom(*g, m), 1.0)).into_iter().collect();
                            b.members.push(Member { label: format!("G({},{};{})", k + 1, r + 1, m + 1), terms });
                        }
                    }
                }
            }
            Target::Pairs => {
                for k in 0..p {
                    for m in 0..p {
                        let terms = spec.get(k, m).map(|g| (b.atom(*g, m), 1.0)).into_iter().collect();
                        b.members.push(Member { label: format!("G({},{})", k + 1, m + 1), terms });
                    }
                }
            }
            Target::Blocks(blocks) => {
                validate_partition(blocks, p)?;
                for (h, block) in blocks.iter().enumerate() {
                    let mut terms = Vec::new();
                    for &i in block {
                        for l in 0..p {
                            if let Some(g) = spec.get(i, l) {
                                terms.push((b.atom(*g, l), 1.0));
                            }
                        }
                    }
                    b.members.push(Member { label: format!("B({})", h + 1), terms });
                }
            }
            Target::Atoms => return Err(Error::InvalidModel("use Family::from_atoms for explicit atoms".into())),
        }
        Ok(Self { p, target, atoms: b.atoms, members: b.members })
    }

    /// One member per atom, in the given order.
    pub fn from_atoms(p: usize, atoms: Vec<Atom>, labels: Vec<String>) -> Self {
        let members = labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| Member { label, terms: alloc::vec![(i, 1.0)] })
            .collect();
        Self { p, target: Target::Atoms, atoms, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.members.iter().map(|m| m.label.clone()).collect()
    }
}

pub(crate) fn validate_partition(blocks: &[Vec<usize>], p: usize) -> Result<()> {
    let mut seen = alloc::vec![false; p];
    for block in blocks {
        if block.is_empty() {
            return Err(Error::InvalidPartition("empty block".into()));
        }
        for &i in block {
            if i >= p {
                return Err(Error::InvalidPartition(format!("component {} outside 1..={p}", i + 1)));
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPartition(format!("component {} appears twice", i + 1)));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition(format!("component {} not covered", i + 1)));
    }
    Ok(())
}

#[derive(Default)]
struct Builder {
    atoms: Vec<Atom>,
    members: Vec<Member>,
}

impl Builder {
    fn atom(&mut self, kernel: GammaKernel, measure: usize) -> usize {
        let a = Atom { kernel, measure };
        if let Some(i) = self.atoms.iter().position(|x| *x == a) {
            return i;
        }
        self.atoms.push(a);
        self.atoms.len() - 1
    }
}

/// Cov(Δ₁A, Δ₁₊ₕB) for every ordered member pair (A, B) and |h| ≤ K.
#[derive(Debug, Clone)]
pub struct LagCovariances {
    pub n: f64,
    pub max_lag: usize,
    members: usize,
    /// Offset of the (a, b) series in `data`, or None if the pair shares no measure.
    offsets: Vec<Option<usize>>,
    data: Vec<f64>,
}

impl LagCovariances {
    pub fn compute(family: &Family, n: f64, max_lag: usize) -> Result<Self> {
        let q = TanhSinh::default();
        let dt = 1.0 / n;
        let kk = max_lag as i64;
        let width = 2 * max_lag + 1;

        // Distinct kernels and the kernel pairs that meet on a common measure.
        let mut kernels: Vec<GammaKernel> = Vec::new();
        let kid: Vec<usize> = family
            .atoms
            .iter()
            .map(|a| match kernels.iter().position(|k| *k == a.kernel) {
                Some(i) => i,
                None => {
                    kernels.push(a.kernel);
                    kernels.len() - 1
                }
            })
            .collect();
        let nk = kernels.len();
        let mut needed = alloc::vec![false; nk * nk];
        for (i, a) in family.atoms.iter().enumerate() {
            for (j, b) in family.atoms.iter().enumerate() {
                if a.measure == b.measure {
                    let (x, y) = (kid[i].min(kid[j]), kid[i].max(kid[j]));
                    needed[x * nk + y] = true;
                }
            }
        }
        // Unordered kernel pairs x ≤ y over lags −K..K (x = y needs only h ≥ 0).
        let mut jobs = Vec::new();
        for x in 0..nk {
            for y in x..nk {
                if needed[x * nk + y] {
                    let lo = if x == y { 0 } else { -kk };
                    for h in lo..=kk {
                        jobs.push((x, y, h));
                    }
                }
            }
        }
        let vals = par_map(jobs.len(), |i| {
            let (x, y, h) = jobs[i];
            increment_covariance(&q, &kernels[x], &kernels[y], dt, h)
        });
        let mut ktab = alloc::vec![f64::NAN; nk * nk * width];
        for (i, v) in vals.into_iter().enumerate() {
            let (x, y, h) = jobs[i];
            let v = v?;
            ktab[(x * nk + y) * width + (h + kk) as usize] = v;
            ktab[(y * nk + x) * width + (kk - h) as usize] = v;
        }

        let c = family.len();
        let mut offsets = alloc::vec![None; c * c];
        let mut data = Vec::new();
        for a in 0..c {
            for b in 0..c {
                let mut series: Option<Vec<f64>> = None;
                for &(ia, ca) in &family.members[a].terms {
                    for &(ib, cb) in &family.members[b].terms {
                        if family.atoms[ia].measure != family.atoms[ib].measure {
                            continue;
                        }
                        let base = (kid[ia] * nk + kid[ib]) * width;
                        let s = series.get_or_insert_with(|| alloc::vec![0.0; width]);
                        for (o, v) in s.iter_mut().zip(&ktab[base..base + width]) {
                            *o += ca * cb * v;
                        }
                    }
                }
                if let Some(s) = series {
                    offsets[a * c + b] = Some(data.len());
                    data.extend_from_slice(&s);
                }
            }
        }
        Ok(Self { n, max_lag, members: c, offsets, data })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    /// Cov(Δ₁A_a, Δ₁₊ₕA_b); zero for pairs on disjoint measures.
    pub fn cov(&self, a: usize, b: usize, h: i64) -> f64 {
        match self.series(a, b) {
            Some(s) => s[(h + self.max_lag as i64) as usize],
            None => 0.0,
        }
    }

    /// Lags −K..=K of the (a, b) pair, or None when identically zero.
    pub fn series(&self, a: usize, b: usize) -> Option<&[f64]> {
        let w = 2 * self.max_lag + 1;
        self.offsets[a * self.members + b].map(|o| &self.data[o..o + w])
    }

    pub fn variance(&self, a: usize) -> f64 {
        self.cov(a, a, 0)
    }
}
