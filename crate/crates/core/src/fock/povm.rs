use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::states::{tmsv_vector, CoherentProbe};
use super::{annihilation, c, photon_numbers, FockOperator, MAX_CUTOFF};
use crate::error::{invalid, Error, Result};

/// Largest squeezed-vacuum truncation deficit `λ^{2d}` accepted by
/// [`p11_statistic`].
pub const P11_TRUNCATION_TOLERANCE: f64 = 1e-9;

/// Largest tolerated `λ^{−n_max}` in the witness conjugation.
pub const MAX_CONJUGATION_GROWTH: f64 = 1e12;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(invalid("lambda", format!("λ must lie in (0, 1), got {lambda}")))
    }
}

fn lambda_weights(cutoffs: &[usize], lambda: f64) -> Vec<f64> {
    photon_numbers(cutoffs)
        .into_iter()
        .map(|n| lambda.powi(n as i32))
        .collect()
}

/// `(1−λ²)^m λ^{n̂} Xᵀ λ^{n̂}` for an `m`-mode operator.
pub fn party_povm_element(x: &FockOperator, lambda: f64) -> Result<FockOperator> {
    check_lambda(lambda)?;
    let w = lambda_weights(x.cutoffs(), lambda);
    let prefactor = (1.0 - lambda * lambda).powi(x.n_modes() as i32);
    Ok(x.transpose().congruence_diag(&w).scale(prefactor))
}

/// POVM element of the two-mode state `rho`.
pub fn povm_element(rho: &FockOperator, lambda: f64) -> Result<FockOperator> {
    if rho.n_modes() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "bipartite POVM element needs a two-mode state, got {} modes",
            rho.n_modes()
        )));
    }
    party_povm_element(rho, lambda)
}

/// The same element computed literally: every mode of `rho` is projected,
/// together with its probe mode, onto a truncated, renormalized two-mode
/// squeezed vacuum with `tanh r = λ`, and the state modes are traced out.
///
/// With `K = φ ⊗ … ⊗ φ` (`φ_{ij}` the squeezed-vacuum amplitudes) this is
/// `M = Kᵀ ρᵀ K̄`.
pub fn povm_element_brute_force(rho: &FockOperator, r: f64) -> Result<FockOperator> {
    let mut k = DMatrix::from_element(1, 1, c(1.0));
    for &d in rho.cutoffs() {
        k = k.kronecker(&tmsv_vector(r, d)?.amplitude_matrix());
    }
    let rho_t = rho.matrix().transpose();
    let m = k.transpose() * rho_t * k.map(|z| z.conj());
    FockOperator::new(rho.cutoffs().to_vec(), m)
}

/// `λ^{−n̂} Wᵀ λ^{−n̂}`.
///
/// Fails with [`Error::ConjugationOverflow`] when `λ^{−n_max}` exceeds
/// [`MAX_CONJUGATION_GROWTH`]; admissible witnesses need `λ > e^{−1/N}` for
/// their energy scale `N`.
pub fn witness_tilde(w: &FockOperator, lambda: f64) -> Result<FockOperator> {
    check_lambda(lambda)?;
    let max_photons: usize = w.cutoffs().iter().map(|d| d - 1).sum();
    let growth = lambda.powi(-(max_photons as i32));
    if !(growth <= MAX_CONJUGATION_GROWTH) {
        return Err(Error::ConjugationOverflow {
            lambda,
            max_photons,
            growth,
        });
    }
    let w_inv: Vec<f64> = lambda_weights(w.cutoffs(), lambda).iter().map(|v| 1.0 / v).collect();
    Ok(w.transpose().congruence_diag(&w_inv))
}

fn shell_maxima(op: &FockOperator) -> Vec<(f64, f64)> {
    let numbers = photon_numbers(op.cutoffs());
    let top = numbers.iter().copied().max().unwrap_or(0);
    let mut best = vec![0.0f64; top + 1];
    for (i, &n) in numbers.iter().enumerate() {
        best[n] = best[n].max(op.matrix()[(i, i)].norm());
    }
    best.into_iter()
        .enumerate()
        .filter(|(_, v)| *v > 0.0)
        .map(|(n, v)| (n as f64, v.ln()))
        .collect()
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// [`witness_tilde`] plus a growth test: the least-squares slope of
/// `ln max|W̃_{nn}|` over total-photon shells must be negative.
///
/// Returns the operator and the fitted slope. On failure the energy scale is
/// estimated from the decay of `W` itself.
pub fn witness_tilde_with_growth_check(w: &FockOperator, lambda: f64) -> Result<(FockOperator, f64)> {
    let tilde = witness_tilde(w, lambda)?;
    let points = shell_maxima(&tilde);
    if points.len() < 2 {
        return Ok((tilde, f64::NEG_INFINITY));
    }
    let s = slope(&points);
    if s >= 0.0 {
        let decay = -slope(&shell_maxima(w)) / 2.0;
        let energy_scale = if decay > 0.0 { 1.0 / decay } else { f64::INFINITY };
        return Err(Error::OutsideDampingWindow {
            lambda,
            lower: (-1.0 / energy_scale).exp(),
            energy_scale,
        });
    }
    Ok((tilde, s))
}

/// Admissible λ window and damping bound for energy scale `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingWindow {
    pub energy_scale: f64,
    /// `e^{−1/N}`; λ must exceed it.
    pub lower: f64,
    pub upper: f64,
    /// `1 − e^{−2/N}`, an upper bound on `1 − λ²` inside the window.
    pub factor: f64,
}

impl DampingWindow {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lower && lambda < self.upper
    }
}

pub fn damping_factor(energy_scale: f64) -> Result<DampingWindow> {
    if !(energy_scale > 0.0 && energy_scale.is_finite()) {
        return Err(invalid("energy_scale", format!("N must be positive, got {energy_scale}")));
    }
    Ok(DampingWindow {
        energy_scale,
        lower: (-1.0 / energy_scale).exp(),
        upper: 1.0,
        factor: -(-2.0 / energy_scale).exp_m1(),
    })
}

/// A witness damped at energy scale `N`: `W = e^{−n̂/N} X e^{−n̂/N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyScaleWitness {
    pub operator: FockOperator,
    pub energy_scale: f64,
}

pub fn energy_scale_witness(x: &FockOperator, energy_scale: f64) -> Result<EnergyScaleWitness> {
    damping_factor(energy_scale)?;
    let w: Vec<f64> = photon_numbers(x.cutoffs())
        .into_iter()
        .map(|n| (-(n as f64) / energy_scale).exp())
        .collect();
    Ok(EnergyScaleWitness {
        operator: x.congruence_diag(&w),
        energy_scale,
    })
}

impl EnergyScaleWitness {
    pub fn window(&self) -> DampingWindow {
        damping_factor(self.energy_scale).expect("validated at construction")
    }

    /// `W̃`, rejected unless `e^{−1/N} < λ < 1`.
    pub fn tilde(&self, lambda: f64) -> Result<FockOperator> {
        check_lambda(lambda)?;
        let window = self.window();
        if !window.contains(lambda) {
            return Err(Error::OutsideDampingWindow {
                lambda,
                lower: window.lower,
                energy_scale: self.energy_scale,
            });
        }
        witness_tilde(&self.operator, lambda)
    }
}

/// Duan-type witness `κ² n̂_A + n̂_B/κ² − (a_A a_B + a_A† a_B†)` on `[d, d]`.
///
/// Its expectation is `EW_κ − (κ² + κ⁻²)/2` for zero-mean states, hence
/// non-negative on separable states.
pub fn duan_fock_witness(cutoff: usize, kappa: f64) -> Result<FockOperator> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa", format!("κ must be positive, got {kappa}")));
    }
    if cutoff < 2 {
        return Err(invalid("cutoff", "need at least two levels"));
    }
    let a = annihilation(cutoff);
    let id = DMatrix::<Complex64>::identity(cutoff, cutoff);
    let n = a.adjoint() * &a;
    let aa = a.kronecker(&a);
    let k2 = kappa * kappa;
    let m = n.kronecker(&id) * c(k2) + id.kronecker(&n) * c(1.0 / k2) - &aa - aa.adjoint();
    FockOperator::new(vec![cutoff, cutoff], m)
}

/// Bipartition of the modes of a multimode operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
}

impl Partition {
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        let mut all: Vec<usize> = self.a.iter().chain(&self.b).copied().collect();
        all.sort_unstable();
        if all != (0..n_modes).collect::<Vec<_>>() {
            return Err(invalid(
                "partition",
                format!("{:?} | {:?} is not a partition of {n_modes} modes", self.a, self.b),
            ));
        }
        if self.a.is_empty() || self.b.is_empty() {
            return Err(invalid("partition", "both parties need at least one mode"));
        }
        Ok(())
    }
}

/// POVM element of a multimode state split between two parties; every mode
/// is probed and projected separately.
pub fn multimode_povm_element(rho: &FockOperator, lambda: f64, partition: &Partition) -> Result<FockOperator> {
    partition.validate(rho.n_modes())?;
    party_povm_element(rho, lambda)
}

/// One term `p · ρ_A ⊗ σ_B` of a separable decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub weight: f64,
    pub rho_a: FockOperator,
    pub sigma_b: FockOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableTransformReport {
    /// `‖Σ p M^μ ⊗ N^μ − M(Σ p ρ^μ ⊗ σ^μ)‖_F`.
    pub reconstruction_error: f64,
    /// Smallest eigenvalue over all local factors `M^μ`, `N^μ`.
    pub min_factor_eigenvalue: f64,
    /// Smallest eigenvalue over the reverse images `λ^{n̂}(M^μ)ᵀλ^{n̂}`.
    pub min_reverse_eigenvalue: f64,
    pub factors_psd: bool,
}

/// Builds the POVM element of a separable state term by term and checks that
/// it equals the element of the mixture and that every factor is positive.
pub fn separable_transform_check(terms: &[ProductTerm], lambda: f64) -> Result<SeparableTransformReport> {
    check_lambda(lambda)?;
    if terms.is_empty() {
        return Err(Error::Empty("product terms"));
    }
    if terms.iter().any(|t| !(t.weight >= 0.0)) {
        return Err(invalid("weights", "weights must be non-negative"));
    }
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid("weights", format!("weights sum to {total}, not 1")));
    }
    let mut mixture: Option<FockOperator> = None;
    let mut combined: Option<FockOperator> = None;
    let mut min_factor = f64::INFINITY;
    let mut min_reverse = f64::INFINITY;
    for t in terms {
        let m = party_povm_element(&t.rho_a, lambda)?;
        let n = party_povm_element(&t.sigma_b, lambda)?;
        for f in [&m, &n] {
            min_factor = min_factor.min(f.min_eigenvalue());
            let w = lambda_weights(f.cutoffs(), lambda);
            min_reverse = min_reverse.min(f.transpose().congruence_diag(&w).min_eigenvalue());
        }
        let term = m.kron(&n).scale(t.weight);
        let state = t.rho_a.kron(&t.sigma_b).scale(t.weight);
        combined = Some(match combined {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
        mixture = Some(match mixture {
            None => state,
            Some(acc) => acc.add(&state)?,
        });
    }
    let mixture = mixture.expect("non-empty terms");
    let direct = party_povm_element(&mixture, lambda)?;
    let reconstruction_error = combined.expect("non-empty terms").sub(&direct)?.frobenius_norm();
    let tol = -1e-12;
    Ok(SeparableTransformReport {
        reconstruction_error,
        min_factor_eigenvalue: min_factor,
        min_reverse_eigenvalue: min_reverse,
        factors_psd: min_factor >= tol && min_reverse >= tol,
    })
}

/// Smallest per-mode cutoff `d ≤ 14` with `λ^{2d} < 1e-12` and every probe
/// amplitude up to `max_amplitude` truncated with deficit below 1e-10.
pub fn choose_cutoff(lambda: f64, max_amplitude: f64) -> Result<usize> {
    check_lambda(lambda)?;
    for d in 1..=MAX_CUTOFF {
        let conj_ok = lambda.powi(2 * d as i32) < 1e-12;
        let probe_ok = CoherentProbe::new(Complex64::new(max_amplitude, 0.0), d).is_ok();
        if conj_ok && probe_ok {
            return Ok(d);
        }
    }
    Err(invalid(
        "cutoff",
        format!("no cutoff ≤ {MAX_CUTOFF} suffices for λ = {lambda}, |α| ≤ {max_amplitude}"),
    ))
}

/// Probability of the double success outcome, computed two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P11Report {
    pub value: f64,
    /// Via the projections onto squeezed vacua of the four-mode state.
    pub via_projection: f64,
    /// Via the closed-form POVM element.
    pub via_povm: f64,
    pub cutoff: usize,
    pub lambda: f64,
}

/// `Tr[M |α⟩⟨α| ⊗ |β⟩⟨β|]` for the two-mode state `rho` with `λ = tanh r`.
///
/// The projection route contracts `ρ ⊗ |α,β⟩⟨α,β|` with
/// `Ψ = φ_{AA'} ⊗ φ_{BB'}`; the closed-form route uses [`povm_element`].
/// Both must agree to 1e-8.
pub fn p11_statistic(rho: &FockOperator, r: f64, alpha: Complex64, beta: Complex64) -> Result<P11Report> {
    if rho.n_modes() != 2 || rho.cutoffs()[0] != rho.cutoffs()[1] {
        return Err(Error::DimensionMismatch(
            "the double-success statistic needs a two-mode state with equal cutoffs".into(),
        ));
    }
    let d = rho.cutoffs()[0];
    let lambda = r.tanh();
    let truncation = lambda.powi(2 * d as i32);
    if truncation > P11_TRUNCATION_TOLERANCE {
        return Err(invalid(
            "cutoff",
            format!(
                "λ^(2d) = {truncation:e} at λ = {lambda}, d = {d} exceeds {P11_TRUNCATION_TOLERANCE:e}; \
                 raise the cutoff or lower r"
            ),
        ));
    }
    let probe_a = CoherentProbe::new(alpha, d)?.vector();
    let probe_b = CoherentProbe::new(beta, d)?.vector();
    let gamma: DVector<Complex64> = probe_a.kronecker(&probe_b);

    let phi = tmsv_vector(r, d)?.amplitude_matrix();
    let psi = phi.kronecker(&phi);
    let u = &psi * gamma.map(|z| z.conj());
    let via_projection = rho.expectation(&u)?.re;

    let m = povm_element(rho, lambda)?;
    let via_povm = m.expectation(&gamma)?.re;
    if (via_projection - via_povm).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "double-success probability disagrees between routes: {via_projection} vs {via_povm}"
        )));
    }
    Ok(P11Report {
        value: via_povm,
        via_projection,
        via_povm,
        cutoff: d,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{random_density, random_hermitian};
    use crate::sampler::RngStream;

    #[test]
    fn vacuum_and_number_states() {
        let vac = FockOperator::number_projector(vec![3, 3], &[0, 0]).unwrap();
        let m = povm_element(&vac, 0.5).unwrap();
        assert!((m.matrix()[(0, 0)].re - 0.75 * 0.75).abs() < 1e-15);
        let one = FockOperator::number_projector(vec![3, 3], &[1, 1]).unwrap();
        let m = povm_element(&one, 0.5).unwrap();
        assert!((m.matrix()[(4, 4)].re - 0.035_156_25).abs() < 1e-15);
        assert!(povm_element(&one, 1.0).is_err());
        assert!(povm_element(&one, 0.0).is_err());
    }

    #[test]
    fn brute_force_matches_closed_form() {
        let mut rng = RngStream::new(10, 0).rng();
        let r = 0.4f64;
        for _ in 0..3 {
            let rho = random_density(&[10, 10], 4, &mut rng).unwrap();
            let a = povm_element(&rho, r.tanh()).unwrap();
            let b = povm_element_brute_force(&rho, r).unwrap();
            assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-8);
        }
    }

    #[test]
    fn tilde_of_identity_is_inverse_weights() {
        let id = FockOperator::identity(vec![3, 2]).unwrap();
        let t = witness_tilde(&id, 0.5).unwrap();
        for (i, n) in photon_numbers(&[3, 2]).into_iter().enumerate() {
            assert!((t.matrix()[(i, i)].re - 0.5f64.powi(-2 * n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_is_rejected() {
        let id = FockOperator::identity(vec![14, 14]).unwrap();
        assert!(matches!(witness_tilde(&id, 0.1), Err(Error::ConjugationOverflow { .. })));
        assert!(witness_tilde(&id, 0.5).is_ok());
    }

    #[test]
    fn trace_identity() {
        let mut rng = RngStream::new(11, 0).rng();
        let lambda = 0.6;
        let rho = random_density(&[5, 5], 25, &mut rng).unwrap();
        let w = random_hermitian(&[5, 5], &mut rng).unwrap();
        let lhs = povm_element(&rho, lambda)
            .unwrap()
            .trace_product(&witness_tilde(&w, lambda).unwrap())
            .unwrap();
        let rhs = rho.trace_product(&w).unwrap() * (1.0 - lambda * lambda).powi(2);
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0));
    }

    #[test]
    fn damping_windows() {
        let w = damping_factor(1.0).unwrap();
        assert!((w.lower - (-1f64).exp()).abs() < 1e-16);
        assert!((w.factor - (1.0 - (-2f64).exp())).abs() < 1e-15);
        let w = damping_factor(100.0).unwrap();
        assert!((w.factor / 0.02 - 1.0).abs() < 0.01);
        assert!(damping_factor(0.0).is_err());
        assert!(damping_factor(-1.0).is_err());
    }

    #[test]
    fn energy_scale_window_rejections() {
        let x = FockOperator::identity(vec![6, 6]).unwrap();
        let w1 = energy_scale_witness(&x, 1.0).unwrap();
        assert!(w1.tilde(0.99).is_ok());
        assert!(matches!(w1.tilde(0.3), Err(Error::OutsideDampingWindow { .. })));
        let w10 = energy_scale_witness(&x, 10.0).unwrap();
        let err = w10.tilde(0.3).unwrap_err().to_string();
        assert!(err.contains("0.904837"), "{err}");
    }

    #[test]
    fn growth_check_agrees_with_window() {
        let x = FockOperator::identity(vec![8, 8]).unwrap();
        let n = 4.0;
        let w = energy_scale_witness(&x, n).unwrap();
        let lower = (-1.0 / n).exp();
        assert!(witness_tilde_with_growth_check(&w.operator, lower * 1.01).is_ok());
        let err = witness_tilde_with_growth_check(&w.operator, lower * 0.99).unwrap_err();
        match err {
            Error::OutsideDampingWindow { energy_scale, .. } => assert!((energy_scale - n).abs() < 1e-9),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duan_fock_witness_on_tmsv() {
        let d = 30;
        let r = 0.5f64;
        let t = tmsv_vector(r, d).unwrap();
        let w = duan_fock_witness(d, 1.0).unwrap();
        let v = w.expectation(&t.vector).unwrap().re;
        assert!((v - ((-2.0 * r).exp() - 1.0)).abs() < 1e-10);
        let vac = FockOperator::number_projector(vec![4, 4], &[0, 0]).unwrap();
        assert!(vac.trace_product(&duan_fock_witness(4, 1.7).unwrap()).unwrap().re.abs() < 1e-15);
    }

    #[test]
    fn partition_validation() {
        let p = Partition { a: vec![0, 1], b: vec![2] };
        assert!(p.validate(3).is_ok());
        assert!(p.validate(4).is_err());
        assert!(Partition { a: vec![0, 0], b: vec![2] }.validate(3).is_err());
        assert!(Partition { a: vec![], b: vec![0] }.validate(1).is_err());
    }

    #[test]
    fn p11_vacuum() {
        let vac = FockOperator::number_projector(vec![14, 14], &[0, 0]).unwrap();
        let r = 0.5f64;
        let small = FockOperator::number_projector(vec![6, 6], &[0, 0]).unwrap();
        assert!(p11_statistic(&small, r, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).is_err());
        let rep = p11_statistic(&vac, r, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).unwrap();
        let l2 = r.tanh().powi(2);
        assert!((rep.value - (1.0 - l2).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cutoff_rule() {
        let d = choose_cutoff(0.2, 0.5).unwrap();
        assert!(0.2f64.powi(2 * d as i32) < 1e-12);
        assert!(0.2f64.powi(2 * (d as i32 - 1)) >= 1e-12 || CoherentProbe::new(Complex64::new(0.5, 0.0), d - 1).is_err());
        assert!(choose_cutoff(0.9, 0.0).is_err());
    }
}
