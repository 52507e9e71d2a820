//! Truncated Fock-space checks of the state-to-POVM correspondence.
//!
//! Projecting `ρ_AB ⊗ |α⟩⟨α| ⊗ |β⟩⟨β|` onto two-mode squeezed vacua with
//! `λ = tanh r` turns the source state into the POVM element
//! `M = (1−λ²)^m λ^{n̂} ρᵀ λ^{n̂}` on the probe modes (`m` modes,
//! `n̂` total photon number, transpose in the number basis). A witness `W`
//! for `ρ` becomes the observable `W̃ = λ^{−n̂} Wᵀ λ^{−n̂}` for `M`, with
//! `Tr[M W̃] = (1−λ²)^m Tr[ρ W]`.
//!
//! Operators are dense matrices over the tensor-product number basis,
//! first mode most significant.

mod heterodyne;
mod povm;
mod states;
mod tomography;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use heterodyne::{heterodyne_vacuum_projection, HeterodyneEstimate};
pub use povm::{
    choose_cutoff, damping_factor, duan_fock_witness, energy_scale_witness, multimode_povm_element,
    p11_statistic, party_povm_element, povm_element, povm_element_brute_force,
    separable_transform_check, witness_tilde, witness_tilde_with_growth_check, DampingWindow,
    EnergyScaleWitness, P11Report, Partition, ProductTerm, SeparableTransformReport, MAX_CONJUGATION_GROWTH,
    P11_TRUNCATION_TOLERANCE,
};
pub use states::{
    annihilation, beam_splitter_unitary_apply, squeeze_unitary_apply, tmsv_from_squeezers, tmsv_vector,
    CoherentProbe, TruncatedTmsv, PROBE_DEFICIT_TOLERANCE,
};
pub use tomography::{reconstruct_povm, Reconstruction, TomographyGrid, TomographyRow};

/// Largest per-mode cutoff accepted by the verification tools.
pub const MAX_CUTOFF: usize = 14;

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Dimension of the tensor-product space.
pub fn total_dim(cutoffs: &[usize]) -> usize {
    cutoffs.iter().product()
}

/// Flat index of an occupation pattern.
pub fn basis_index(cutoffs: &[usize], occupations: &[usize]) -> usize {
    cutoffs
        .iter()
        .zip(occupations)
        .fold(0, |acc, (&d, &n)| acc * d + n)
}

/// Occupation pattern of a flat index.
pub fn occupations(cutoffs: &[usize], mut index: usize) -> Vec<usize> {
    let mut occ = vec![0; cutoffs.len()];
    for (slot, &d) in occ.iter_mut().zip(cutoffs).rev() {
        *slot = index % d;
        index /= d;
    }
    occ
}

/// Total photon number of every basis state.
pub fn photon_numbers(cutoffs: &[usize]) -> Vec<usize> {
    (0..total_dim(cutoffs))
        .map(|i| occupations(cutoffs, i).iter().sum())
        .collect()
}

/// Dense operator on a truncated multimode Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    cutoffs: Vec<usize>,
    matrix: DMatrix<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct FockOperatorDoc {
    cutoffs: Vec<usize>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl FockOperator {
    pub fn new(cutoffs: Vec<usize>, matrix: DMatrix<Complex64>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::Empty("cutoffs"));
        }
        if cutoffs.contains(&0) {
            return Err(invalid("cutoffs", "every cutoff must be at least 1"));
        }
        let dim = total_dim(&cutoffs);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "cutoffs {cutoffs:?} need a {dim}×{dim} matrix, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { cutoffs, matrix })
    }

    pub fn zeros(cutoffs: Vec<usize>) -> Result<Self> {
        let dim = total_dim(&cutoffs);
        Self::new(cutoffs, DMatrix::zeros(dim, dim))
    }

    pub fn identity(cutoffs: Vec<usize>) -> Result<Self> {
        let dim = total_dim(&cutoffs);
        Self::new(cutoffs, DMatrix::identity(dim, dim))
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(cutoffs: Vec<usize>, psi: &DVector<Complex64>) -> Result<Self> {
        Self::new(cutoffs, psi * psi.adjoint())
    }

    /// `|n⟩⟨n|` for an occupation pattern.
    pub fn number_projector(cutoffs: Vec<usize>, occ: &[usize]) -> Result<Self> {
        if occ.len() != cutoffs.len() || occ.iter().zip(&cutoffs).any(|(n, d)| n >= d) {
            return Err(invalid("occupations", format!("{occ:?} outside cutoffs {cutoffs:?}")));
        }
        let mut op = Self::zeros(cutoffs)?;
        let k = basis_index(&op.cutoffs, occ);
        op.matrix[(k, k)] = c(1.0);
        Ok(op)
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn n_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `Tr[self · other]`.
    pub fn trace_product(&self, other: &FockOperator) -> Result<Complex64> {
        self.same_space(other)?;
        let (a, b) = (&self.matrix, &other.matrix);
        let n = a.nrows();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += a[(i, j)] * b[(j, i)];
            }
        }
        Ok(acc)
    }

    fn same_space(&self, other: &FockOperator) -> Result<()> {
        if self.cutoffs == other.cutoffs {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "cutoffs {:?} vs {:?}",
                self.cutoffs, other.cutoffs
            )))
        }
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= 1e-12
    }

    /// Checks the density-matrix invariants: Hermitian, unit trace, PSD.
    pub fn validate_density(&self) -> Result<()> {
        if !self.is_hermitian() {
            return Err(invalid("rho", format!("not Hermitian (‖ρ − ρ†‖ = {:e})", self.hermiticity_error())));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(invalid("rho", format!("trace {tr} ≠ 1")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-10 {
            return Err(invalid("rho", format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * c(0.5);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty operator")
    }

    /// Transpose in the number basis.
    pub fn transpose(&self) -> FockOperator {
        Self {
            cutoffs: self.cutoffs.clone(),
            matrix: self.matrix.transpose(),
        }
    }

    pub fn adjoint(&self) -> FockOperator {
        Self {
            cutoffs: self.cutoffs.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// Partial transpose on the listed modes.
    pub fn partial_transpose(&self, modes: &[usize]) -> Result<FockOperator> {
        for &m in modes {
            if m >= self.n_modes() {
                return Err(Error::ModeOutOfRange {
                    index: m,
                    n_modes: self.n_modes(),
                });
            }
        }
        let dim = self.dim();
        let occ: Vec<Vec<usize>> = (0..dim).map(|i| occupations(&self.cutoffs, i)).collect();
        let mut out = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let (mut oi, mut oj) = (occ[i].clone(), occ[j].clone());
                for &m in modes {
                    std::mem::swap(&mut oi[m], &mut oj[m]);
                }
                out[(basis_index(&self.cutoffs, &oi), basis_index(&self.cutoffs, &oj))] = self.matrix[(i, j)];
            }
        }
        Self::new(self.cutoffs.clone(), out)
    }

    /// Tensor product; modes of `other` follow those of `self`.
    pub fn kron(&self, other: &FockOperator) -> FockOperator {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs.extend_from_slice(&other.cutoffs);
        Self {
            cutoffs,
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// `diag(w) · self · diag(w)` for real weights `w`.
    pub fn congruence_diag(&self, w: &[f64]) -> FockOperator {
        let m = DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * (w[i] * w[j]));
        Self {
            cutoffs: self.cutoffs.clone(),
            matrix: m,
        }
    }

    pub fn scale(&self, s: f64) -> FockOperator {
        Self {
            cutoffs: self.cutoffs.clone(),
            matrix: &self.matrix * c(s),
        }
    }

    pub fn add(&self, other: &FockOperator) -> Result<FockOperator> {
        self.same_space(other)?;
        Ok(Self {
            cutoffs: self.cutoffs.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &FockOperator) -> Result<FockOperator> {
        self.same_space(other)?;
        Ok(Self {
            cutoffs: self.cutoffs.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// `⟨ψ| self |ψ⟩`.
    pub fn expectation(&self, psi: &DVector<Complex64>) -> Result<Complex64> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}-dimensional operator",
                psi.len(),
                self.dim()
            )));
        }
        Ok((psi.adjoint() * &self.matrix * psi)[(0, 0)])
    }

    /// Same matrix viewed with a different split into modes.
    pub fn reshaped(&self, cutoffs: Vec<usize>) -> Result<FockOperator> {
        Self::new(cutoffs, self.matrix.clone())
    }

    /// Embeds into larger per-mode cutoffs, padding with zeros.
    pub fn embed(&self, cutoffs: &[usize]) -> Result<FockOperator> {
        if cutoffs.len() != self.n_modes() || cutoffs.iter().zip(&self.cutoffs).any(|(new, old)| new < old) {
            return Err(invalid("cutoffs", format!("cannot embed {:?} into {cutoffs:?}", self.cutoffs)));
        }
        let mut out = FockOperator::zeros(cutoffs.to_vec())?;
        let map: Vec<usize> = (0..self.dim())
            .map(|i| basis_index(cutoffs, &occupations(&self.cutoffs, i)))
            .collect();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                out.matrix[(map[i], map[j])] = self.matrix[(i, j)];
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.dim();
        let doc = FockOperatorDoc {
            cutoffs: self.cutoffs.clone(),
            re: (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)].re).collect()).collect(),
            im: (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)].im).collect()).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FockOperatorDoc = serde_json::from_str(text)?;
        let n = doc.re.len();
        if doc.im.len() != n || doc.re.iter().chain(&doc.im).any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch("re/im parts must be square and equal-sized".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(doc.re[i][j], doc.im[i][j]));
        Self::new(doc.cutoffs, m)
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Random density matrix `G G† / Tr` from a Ginibre matrix of the given rank.
pub fn random_density<R: Rng + ?Sized>(cutoffs: &[usize], rank: usize, rng: &mut R) -> Result<FockOperator> {
    let dim = total_dim(cutoffs);
    if rank == 0 || rank > dim {
        return Err(invalid("rank", format!("rank must lie in 1..={dim}, got {rank}")));
    }
    let g = DMatrix::from_fn(dim, rank, |_, _| complex_normal(rng));
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    let rho = (&rho + rho.adjoint()) * (c(0.5) / tr);
    FockOperator::new(cutoffs.to_vec(), rho)
}

/// Random pure state vector.
pub fn random_pure_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<Complex64> {
    let v = DVector::from_fn(dim, |_, _| complex_normal(rng));
    let norm = v.norm();
    v / c(norm)
}

/// Random Hermitian operator with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(cutoffs: &[usize], rng: &mut R) -> Result<FockOperator> {
    let dim = total_dim(cutoffs);
    let g = DMatrix::from_fn(dim, dim, |_, _| complex_normal(rng));
    FockOperator::new(cutoffs.to_vec(), (&g + g.adjoint()) * c(0.5))
}
