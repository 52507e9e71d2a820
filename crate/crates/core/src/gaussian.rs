//! Gaussian states of bosonic modes in phase space.
//!
//! Quadratures are ordered `(x₁, p₁, …, x_n, p_n)` with `â = x̂ + i p̂`, so
//! `[x̂, p̂] = i/2` and the vacuum covariance is `¼·I`. Covariances use the
//! symmetrized convention `cov_ij = ½⟨{Δr_i, Δr_j}⟩`.
//!
//! Every constructor symmetrizes the covariance and checks the uncertainty
//! relation `cov + (i/4)·Ω ≥ 0`, so a [`GaussianState`] value is always
//! physical.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Quadrature variance of the vacuum in the `â = x̂ + i p̂` convention.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Slack allowed on the smallest eigenvalue of `cov + iΩ/4`.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Frobenius-norm slack allowed on `SᵀΩS − Ω`.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-10;

/// Standard symplectic form for the interleaved `(x, p)` ordering.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

fn check_mode(index: usize, n_modes: usize) -> Result<()> {
    if index < n_modes {
        Ok(())
    } else {
        Err(Error::ModeOutOfRange { index, n_modes })
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the Hermitian matrix `cov + (i/4)·Ω`.
///
/// Computed through the real embedding `[[A, −B], [B, A]]` of `A + iB`,
/// which has the same spectrum with every eigenvalue doubled.
pub fn uncertainty_min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    let dim = cov.nrows();
    let b = symplectic_form(dim / 2) * 0.25;
    let mut embed = DMatrix::zeros(2 * dim, 2 * dim);
    embed.view_mut((0, 0), (dim, dim)).copy_from(cov);
    embed.view_mut((dim, dim), (dim, dim)).copy_from(cov);
    embed.view_mut((0, dim), (dim, dim)).copy_from(&(-&b));
    embed.view_mut((dim, 0), (dim, dim)).copy_from(&b);
    SymmetricEigen::new(embed).eigenvalues.min()
}

/// Symplectic eigenvalues of a positive-definite `2n × 2n` matrix, ascending.
///
/// They are the singular values of `cov^{1/2} Ω cov^{1/2}`, which come in
/// equal pairs.
pub fn symplectic_spectrum(cov: &DMatrix<f64>) -> Vec<f64> {
    let n = cov.nrows() / 2;
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let k = &sqrt * symplectic_form(n) * &sqrt;
    let mut sv: Vec<f64> = k.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect()
}

/// Convention for the balanced beam splitter acting on modes `(i, j)`.
///
/// Every quadrature pair `(q_i, q_j)` (both `x` and `p`) is mapped the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamSplitterConvention {
    /// `(q_i, q_j) → ((q_i + q_j)/√2, (q_i − q_j)/√2)`; its own inverse.
    SumDifference,
    /// `(q_i, q_j) → ((q_i + q_j)/√2, (q_j − q_i)/√2)`.
    Rotation,
    /// Inverse of [`BeamSplitterConvention::Rotation`].
    RotationConjugate,
}

impl BeamSplitterConvention {
    fn coefficients(self) -> [[f64; 2]; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Self::SumDifference => [[h, h], [h, -h]],
            Self::Rotation => [[h, h], [-h, h]],
            Self::RotationConjugate => [[h, -h], [h, h]],
        }
    }
}

/// Affine symplectic map `r ↦ S r + d` on `n` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMap {
    matrix: DMatrix<f64>,
    displacement: DVector<f64>,
}

impl SymplecticMap {
    pub fn new(matrix: DMatrix<f64>, displacement: DVector<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || dim % 2 != 0 || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "symplectic matrix must be 2n×2n, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if displacement.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "displacement has length {}, expected {dim}",
                displacement.len()
            )));
        }
        let residual = Self::residual(&matrix);
        if !(residual <= SYMPLECTIC_TOLERANCE) {
            return Err(Error::NotSymplectic(residual));
        }
        Ok(Self {
            matrix,
            displacement,
        })
    }

    /// `‖SᵀΩS − Ω‖_F`.
    pub fn residual(matrix: &DMatrix<f64>) -> f64 {
        let omega = symplectic_form(matrix.nrows() / 2);
        (matrix.transpose() * &omega * matrix - omega).norm()
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * n_modes, 2 * n_modes),
            displacement: DVector::zeros(2 * n_modes),
        }
    }

    pub fn beam_splitter(
        n_modes: usize,
        mode_i: usize,
        mode_j: usize,
        convention: BeamSplitterConvention,
    ) -> Result<Self> {
        check_mode(mode_i, n_modes)?;
        check_mode(mode_j, n_modes)?;
        if mode_i == mode_j {
            return Err(invalid("mode_j", "beam splitter needs two distinct modes"));
        }
        let c = convention.coefficients();
        let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
        let modes = [mode_i, mode_j];
        for quad in 0..2 {
            for (row, &out_mode) in modes.iter().enumerate() {
                for (col, &in_mode) in modes.iter().enumerate() {
                    s[(2 * out_mode + quad, 2 * in_mode + quad)] = c[row][col];
                }
            }
        }
        Self::new(s, DVector::zeros(2 * n_modes))
    }

    /// Single-mode squeezer `x → e^{r} x`, `p → e^{−r} p`.
    pub fn squeezer(n_modes: usize, mode: usize, r: f64) -> Result<Self> {
        ensure_finite("r", r)?;
        Self::local(n_modes, mode, Matrix2::new(r.exp(), 0.0, 0.0, (-r).exp()))
    }

    /// Phase rotation `â → â e^{−iθ}`: `x → x cos θ + p sin θ`, `p → p cos θ − x sin θ`.
    pub fn rotation(n_modes: usize, mode: usize, theta: f64) -> Result<Self> {
        ensure_finite("theta", theta)?;
        let (s, c) = theta.sin_cos();
        Self::local(n_modes, mode, Matrix2::new(c, s, -s, c))
    }

    /// Embeds a 2×2 symplectic (unit-determinant) block acting on one mode.
    pub fn local(n_modes: usize, mode: usize, block: Matrix2<f64>) -> Result<Self> {
        check_mode(mode, n_modes)?;
        let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
        s.view_mut((2 * mode, 2 * mode), (2, 2)).copy_from(&block);
        Self::new(s, DVector::zeros(2 * n_modes))
    }

    pub fn displacement_only(displacement: DVector<f64>) -> Result<Self> {
        let dim = displacement.len();
        Self::new(DMatrix::identity(dim, dim), displacement)
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.displacement
    }

    /// Composition that applies `self` first and `next` afterwards.
    pub fn then(&self, next: &SymplecticMap) -> Result<SymplecticMap> {
        if next.n_modes() != self.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose {}-mode and {}-mode maps",
                self.n_modes(),
                next.n_modes()
            )));
        }
        Ok(SymplecticMap {
            matrix: &next.matrix * &self.matrix,
            displacement: &next.matrix * &self.displacement + &next.displacement,
        })
    }

    /// `S⁻¹ = −Ω Sᵀ Ω`, `d' = −S⁻¹ d`.
    pub fn inverse(&self) -> SymplecticMap {
        let omega = symplectic_form(self.n_modes());
        let inv = -(&omega * self.matrix.transpose() * &omega);
        let displacement = -(&inv * &self.displacement);
        SymplecticMap {
            matrix: inv,
            displacement,
        }
    }
}

/// Pure-loss channel on one mode: `â → √(1−η) â + √η â_vac`.
///
/// `eta` is the fraction of the signal lost, so `eta = 0` is noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    pub mode: usize,
    pub eta: f64,
}

impl LossChannel {
    pub fn new(mode: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self { mode, eta })
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(invalid("eta", format!("loss fraction must lie in [0, 1], got {eta}")))
    }
}

/// Mean vector and covariance matrix of an `n`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianStateDoc", into = "GaussianStateDoc")]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state, symmetrizing `cov` and checking the uncertainty relation.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || dim % 2 != 0 || cov.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be 2n×2n with n ≥ 1, got {}×{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, expected {dim}",
                mean.len()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("cov", "mean and covariance entries must be finite"));
        }
        let cov = symmetrize(&cov);
        let min_eig = uncertainty_min_eigenvalue(&cov);
        if !(min_eig >= -PSD_TOLERANCE) {
            return Err(Error::Unphysical(min_eig));
        }
        Ok(Self {
            n_modes: dim / 2,
            mean,
            cov,
        })
    }

    pub fn vacuum(n_modes: usize) -> Self {
        assert!(n_modes >= 1, "a Gaussian state needs at least one mode");
        Self {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes) * VACUUM_VARIANCE,
        }
    }

    /// Coherent state `|α⟩` with `α = alpha_x + i·alpha_p`.
    pub fn coherent(alpha_x: f64, alpha_p: f64) -> Result<Self> {
        ensure_finite("alpha_x", alpha_x)?;
        ensure_finite("alpha_p", alpha_p)?;
        let mut state = Self::vacuum(1);
        state.mean[0] = alpha_x;
        state.mean[1] = alpha_p;
        Ok(state)
    }

    /// Single-mode thermal state with quadrature variance `variance ≥ ¼`.
    pub fn thermal(variance: f64) -> Result<Self> {
        Self::new(DVector::zeros(2), DMatrix::identity(2, 2) * variance)
    }

    /// Two-mode squeezed vacuum: two opposite single-mode squeezers mixed on a
    /// 50:50 beam splitter.
    pub fn tmsv(r: f64) -> Result<Self> {
        ensure_finite("r", r)?;
        let c = (2.0 * r).cosh() * VACUUM_VARIANCE;
        let s = (2.0 * r).sinh() * VACUUM_VARIANCE;
        #[rustfmt::skip]
        let cov = DMatrix::from_row_slice(4, 4, &[
            c,   0.0,  s,   0.0,
            0.0, c,    0.0, -s,
            s,   0.0,  c,   0.0,
            0.0, -s,   0.0, c,
        ]);
        Self::new(DVector::zeros(4), cov)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Variance of the linear combination `Σ w_i r_i`.
    pub fn variance_of(&self, weights: &DVector<f64>) -> f64 {
        (weights.transpose() * &self.cov * weights)[(0, 0)]
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_spectrum(&self.cov)
    }

    /// `Tr ρ² = Π_k 1/(4ν_k)`.
    pub fn purity(&self) -> f64 {
        self.symplectic_eigenvalues()
            .iter()
            .map(|nu| VACUUM_VARIANCE / nu)
            .product()
    }

    pub fn apply(&self, map: &SymplecticMap) -> Result<Self> {
        if map.n_modes() != self.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "{}-mode map applied to a {}-mode state",
                map.n_modes(),
                self.n_modes
            )));
        }
        let s = map.matrix();
        Self::new(
            s * &self.mean + map.displacement(),
            s * &self.cov * s.transpose(),
        )
    }

    pub fn beam_splitter(
        &self,
        mode_i: usize,
        mode_j: usize,
        convention: BeamSplitterConvention,
    ) -> Result<Self> {
        self.apply(&SymplecticMap::beam_splitter(
            self.n_modes,
            mode_i,
            mode_j,
            convention,
        )?)
    }

    pub fn squeeze(&self, mode: usize, r: f64) -> Result<Self> {
        self.apply(&SymplecticMap::squeezer(self.n_modes, mode, r)?)
    }

    pub fn rotate(&self, mode: usize, theta: f64) -> Result<Self> {
        self.apply(&SymplecticMap::rotation(self.n_modes, mode, theta)?)
    }

    pub fn apply_loss(&self, channel: LossChannel) -> Result<Self> {
        check_eta(channel.eta)?;
        check_mode(channel.mode, self.n_modes)?;
        let keep = (1.0 - channel.eta).sqrt();
        let mut t = DMatrix::identity(2 * self.n_modes, 2 * self.n_modes);
        let k = 2 * channel.mode;
        t[(k, k)] = keep;
        t[(k + 1, k + 1)] = keep;
        let mut cov = &t * &self.cov * t.transpose();
        cov[(k, k)] += channel.eta * VACUUM_VARIANCE;
        cov[(k + 1, k + 1)] += channel.eta * VACUUM_VARIANCE;
        Self::new(&t * &self.mean, cov)
    }

    /// Direct sum of two states; modes of `other` follow those of `self`.
    pub fn tensor(&self, other: &GaussianState) -> Self {
        let (d1, d2) = (2 * self.n_modes, 2 * other.n_modes);
        let mut cov = DMatrix::zeros(d1 + d2, d1 + d2);
        cov.view_mut((0, 0), (d1, d1)).copy_from(&self.cov);
        cov.view_mut((d1, d1), (d2, d2)).copy_from(&other.cov);
        let mut mean = DVector::zeros(d1 + d2);
        mean.rows_mut(0, d1).copy_from(&self.mean);
        mean.rows_mut(d1, d2).copy_from(&other.mean);
        Self {
            n_modes: self.n_modes + other.n_modes,
            mean,
            cov,
        }
    }

    /// Reduced state on `modes`, in the order given (partial trace).
    pub fn restrict(&self, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Empty("mode subset"));
        }
        for (pos, &m) in modes.iter().enumerate() {
            check_mode(m, self.n_modes)?;
            if modes[..pos].contains(&m) {
                return Err(invalid("modes", format!("mode {m} listed twice")));
            }
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        Ok(Self {
            n_modes: modes.len(),
            mean,
            cov,
        })
    }

    /// Smallest symplectic eigenvalue of the covariance after transposing
    /// `mode` (`p → −p` on that mode).
    pub fn partial_transpose_min_eigenvalue(&self, mode: usize) -> Result<f64> {
        check_mode(mode, self.n_modes)?;
        let mut flip = DMatrix::identity(2 * self.n_modes, 2 * self.n_modes);
        flip[(2 * mode + 1, 2 * mode + 1)] = -1.0;
        let pt = &flip * &self.cov * &flip;
        Ok(symplectic_spectrum(&pt)[0])
    }

    /// PPT test; necessary and sufficient for two-mode Gaussian states.
    pub fn is_entangled_ppt(&self) -> Result<bool> {
        if self.n_modes != 2 {
            return Err(Error::DimensionMismatch(format!(
                "PPT test implemented for two modes, got {}",
                self.n_modes
            )));
        }
        Ok(self.partial_transpose_min_eigenvalue(1)? < VACUUM_VARIANCE - 1e-12)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianStateDoc {
    n_modes: usize,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl From<GaussianState> for GaussianStateDoc {
    fn from(state: GaussianState) -> Self {
        Self {
            n_modes: state.n_modes,
            mean: state.mean.iter().copied().collect(),
            cov: state
                .cov
                .row_iter()
                .map(|row| row.iter().copied().collect())
                .collect(),
        }
    }
}

impl TryFrom<GaussianStateDoc> for GaussianState {
    type Error = Error;

    fn try_from(doc: GaussianStateDoc) -> Result<Self> {
        let dim = 2 * doc.n_modes;
        if doc.cov.len() != dim || doc.cov.iter().any(|row| row.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be {dim}×{dim} for n_modes = {}",
                doc.n_modes
            )));
        }
        let flat: Vec<f64> = doc.cov.into_iter().flatten().collect();
        GaussianState::new(
            DVector::from_vec(doc.mean),
            DMatrix::from_row_slice(dim, dim, &flat),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::*;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    #[test]
    fn vacuum_is_quarter_identity() {
        for n in 1..=3 {
            let v = GaussianState::vacuum(n);
            assert_eq!(v.mean(), &DVector::zeros(2 * n));
            assert_eq!(v.cov(), &(DMatrix::identity(2 * n, 2 * n) * 0.25));
            for nu in v.symplectic_eigenvalues() {
                assert!(close(nu, 0.25, 1e-14));
            }
        }
    }

    #[test]
    fn coherent_state_moments() {
        let c = GaussianState::coherent(1.5, -0.3).unwrap();
        assert_eq!(c.mean().as_slice(), &[1.5, -0.3]);
        assert_eq!(c.cov(), &(DMatrix::identity(2, 2) * 0.25));
        assert_eq!(c.cov()[(0, 0)] + c.cov()[(1, 1)], 0.5);
        assert_eq!(GaussianState::coherent(0.0, 0.0).unwrap(), GaussianState::vacuum(1));
        assert!(GaussianState::coherent(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn tmsv_variances() {
        assert_eq!(GaussianState::tmsv(0.0).unwrap(), GaussianState::vacuum(2));
        let t = GaussianState::tmsv(0.5).unwrap();
        assert!(close(t.cov()[(0, 0)], 0.385_770_158_703_810_9, 1e-15));
        assert!(close(t.cov()[(0, 0)], 1f64.cosh() / 4.0, 1e-15));
        let u = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        assert!(close(t.variance_of(&u) + t.variance_of(&v), (-1f64).exp(), 1e-14));
    }

    #[test]
    fn rejects_unphysical_covariance() {
        let cov = DMatrix::identity(2, 2) * 0.2;
        assert!(matches!(
            GaussianState::new(DVector::zeros(2), cov),
            Err(Error::Unphysical(_))
        ));
        // squeezed but pure: allowed
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.025, 2.5]));
        assert!(GaussianState::new(DVector::zeros(2), cov).is_ok());
    }

    #[test]
    fn construction_symmetrizes() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.5]);
        let s = GaussianState::new(DVector::zeros(2), cov).unwrap();
        assert_eq!(s.cov()[(0, 1)], s.cov()[(1, 0)]);
        assert_eq!(s.cov()[(0, 1)], 0.05);
    }

    #[test]
    fn beam_splitter_on_vacua_and_coherent() {
        let vac = GaussianState::vacuum(2);
        let out = vac
            .beam_splitter(0, 1, BeamSplitterConvention::SumDifference)
            .unwrap();
        assert!((out.cov() - vac.cov()).norm() < 1e-15);

        let alpha = (0.8, -1.2);
        let input = GaussianState::coherent(alpha.0, alpha.1)
            .unwrap()
            .tensor(&GaussianState::vacuum(1));
        let out = input
            .beam_splitter(0, 1, BeamSplitterConvention::SumDifference)
            .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [alpha.0 * h, alpha.1 * h, alpha.0 * h, alpha.1 * h];
        for (got, want) in out.mean().iter().zip(expected) {
            assert!(close(*got, want, 1e-15));
        }
        assert!((out.cov() - DMatrix::identity(4, 4) * 0.25).norm() < 1e-15);
    }

    #[test]
    fn beam_splitter_inverses() {
        let s = GaussianState::tmsv(0.3)
            .unwrap()
            .apply(&SymplecticMap::displacement_only(DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4])).unwrap())
            .unwrap();
        let twice = s
            .beam_splitter(0, 1, BeamSplitterConvention::SumDifference)
            .unwrap()
            .beam_splitter(0, 1, BeamSplitterConvention::SumDifference)
            .unwrap();
        assert!((twice.cov() - s.cov()).norm() < 1e-14);
        assert!((twice.mean() - s.mean()).norm() < 1e-14);
        let back = s
            .beam_splitter(0, 1, BeamSplitterConvention::Rotation)
            .unwrap()
            .beam_splitter(0, 1, BeamSplitterConvention::RotationConjugate)
            .unwrap();
        assert!((back.cov() - s.cov()).norm() < 1e-14);
        assert!((back.mean() - s.mean()).norm() < 1e-14);
    }

    #[test]
    fn beam_splitter_index_errors() {
        let v = GaussianState::vacuum(2);
        assert!(matches!(
            v.beam_splitter(0, 2, BeamSplitterConvention::SumDifference),
            Err(Error::ModeOutOfRange { index: 2, n_modes: 2 })
        ));
        assert!(v.beam_splitter(1, 1, BeamSplitterConvention::SumDifference).is_err());
    }

    #[test]
    fn squeezing() {
        let v = GaussianState::vacuum(1);
        assert_eq!(v.squeeze(0, 0.0).unwrap(), v);
        let s = v.squeeze(0, 0.5).unwrap();
        assert!(close(s.cov()[(0, 0)], 1f64.exp() * 0.25, 1e-15));
        assert!(close(s.cov()[(1, 1)], (-1f64).exp() * 0.25, 1e-15));
        assert!(v.squeeze(1, 0.5).is_err());
    }

    #[test]
    fn squeezers_and_beam_splitter_make_tmsv() {
        for r in [0.1, 0.5, 1.3] {
            let built = GaussianState::vacuum(2)
                .squeeze(0, r)
                .unwrap()
                .squeeze(1, -r)
                .unwrap()
                .beam_splitter(0, 1, BeamSplitterConvention::SumDifference)
                .unwrap();
            let t = GaussianState::tmsv(r).unwrap();
            assert!((built.cov() - t.cov()).norm() < 1e-12);
        }
    }

    #[test]
    fn loss_channel_edges() {
        let t = GaussianState::tmsv(0.7).unwrap();
        assert_eq!(t.apply_loss(LossChannel::new(0, 0.0).unwrap()).unwrap(), t);
        let full = t.apply_loss(LossChannel::new(0, 1.0).unwrap()).unwrap();
        let a = full.restrict(&[0]).unwrap();
        assert!((a.cov() - DMatrix::identity(2, 2) * 0.25).norm() < 1e-15);
        assert!(full.cov().view((0, 2), (2, 2)).norm() < 1e-15);
        assert!(LossChannel::new(0, 1.2).is_err());
        assert!(t.apply_loss(LossChannel { mode: 0, eta: -0.1 }).is_err());
    }

    #[test]
    fn symmetric_loss_on_tmsv() {
        let u = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
        for r in [0.2, 0.9] {
            for eta in [0.1, 0.5, 0.8] {
                let s = GaussianState::tmsv(r)
                    .unwrap()
                    .apply_loss(LossChannel::new(0, eta).unwrap())
                    .unwrap()
                    .apply_loss(LossChannel::new(1, eta).unwrap())
                    .unwrap();
                let got = s.variance_of(&u) + s.variance_of(&v);
                let want = eta + (1.0 - eta) * (-2.0 * r).exp();
                assert!(close(got, want, 1e-14), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn tensor_and_restrict() {
        assert_eq!(
            GaussianState::vacuum(1).tensor(&GaussianState::vacuum(1)),
            GaussianState::vacuum(2)
        );
        let r = 0.6;
        let a = GaussianState::tmsv(r).unwrap().restrict(&[0]).unwrap();
        let th = (2.0 * r).cosh() / 4.0;
        assert!((a.cov() - DMatrix::identity(2, 2) * th).norm() < 1e-15);
        let s1 = GaussianState::coherent(0.3, 0.1).unwrap().squeeze(0, 0.2).unwrap();
        let s2 = GaussianState::tmsv(0.4).unwrap();
        let joint = s1.tensor(&s2);
        assert_eq!(joint.restrict(&[0]).unwrap(), s1);
        assert_eq!(joint.restrict(&[1, 2]).unwrap(), s2);
        assert!(matches!(joint.restrict(&[]), Err(Error::Empty(_))));
        assert!(joint.restrict(&[1, 1]).is_err());
        assert!(joint.restrict(&[3]).is_err());
    }

    #[test]
    fn ppt_test_on_known_states() {
        assert!(GaussianState::tmsv(0.2).unwrap().is_entangled_ppt().unwrap());
        assert!(!GaussianState::vacuum(2).is_entangled_ppt().unwrap());
        // TMSV r with symmetric loss stays entangled for η < 1
        let lossy = GaussianState::tmsv(0.5)
            .unwrap()
            .apply_loss(LossChannel::new(1, 0.9).unwrap())
            .unwrap();
        assert!(lossy.is_entangled_ppt().unwrap());
        // ν̃₋ of TMSV is e^{-2r}/4
        let nu = GaussianState::tmsv(0.5)
            .unwrap()
            .partial_transpose_min_eigenvalue(1)
            .unwrap();
        assert!(close(nu, (-1f64).exp() / 4.0, 1e-12));
    }

    #[test]
    fn symplectic_map_inverse_and_validation() {
        let m = SymplecticMap::squeezer(2, 0, 0.4)
            .unwrap()
            .then(&SymplecticMap::beam_splitter(2, 0, 1, BeamSplitterConvention::Rotation).unwrap())
            .unwrap();
        let id = m.then(&m.inverse()).unwrap();
        assert!((id.matrix() - DMatrix::identity(4, 4)).norm() < 1e-14);
        assert!(SymplecticMap::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2)).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = GaussianState::tmsv(0.37)
            .unwrap()
            .rotate(0, 0.123)
            .unwrap()
            .apply_loss(LossChannel::new(1, 0.31).unwrap())
            .unwrap();
        let back = GaussianState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"n_modes":1,"mean":[0,0],"cov":[[0.1,0],[0,0.1]]}"#;
        assert!(GaussianState::from_json(bad).is_err());
    }
}
