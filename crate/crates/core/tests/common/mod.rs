#![allow(dead_code)]

use cvmdi_core::fock::{random_density, FockOperator, ProductTerm};
use cvmdi_core::gaussian::symplectic_form;
use cvmdi_core::{GaussianState, SymplecticMap};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `exp(Ω H)` for a random symmetric `H` with entries of size `scale`.
pub fn random_symplectic<R: Rng>(n_modes: usize, scale: f64, rng: &mut R) -> SymplecticMap {
    let dim = 2 * n_modes;
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-scale..scale));
    let h = (&g + g.transpose()) * 0.5;
    let s = (symplectic_form(n_modes) * h).exp();
    SymplecticMap::new(s, DVector::zeros(dim)).expect("exp(ΩH) is symplectic")
}

fn thermal_pair<R: Rng>(rng: &mut R, spread: f64) -> GaussianState {
    let a = GaussianState::thermal(0.25 * (1.0 + spread * rng.random::<f64>())).unwrap();
    let b = GaussianState::thermal(0.25 * (1.0 + spread * rng.random::<f64>())).unwrap();
    a.tensor(&b)
}

/// Random two-mode Gaussian state: a global symplectic applied to a product
/// of thermal states, with a random displacement.
pub fn random_gaussian<R: Rng>(rng: &mut R) -> GaussianState {
    let s = random_symplectic(2, 0.6, rng);
    let shift = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    thermal_pair(rng, 1.5)
        .apply(&s)
        .unwrap()
        .apply(&SymplecticMap::displacement_only(shift).unwrap())
        .unwrap()
}

/// Random separable two-mode Gaussian state: random local states plus
/// classical Gaussian noise (a Gaussian mixture of displaced products).
pub fn random_separable_gaussian<R: Rng>(rng: &mut R) -> GaussianState {
    let mut local = thermal_pair(rng, 1.5);
    for mode in 0..2 {
        let block = random_symplectic(1, 0.8, rng).matrix().clone();
        let mut m = DMatrix::identity(4, 4);
        m.view_mut((2 * mode, 2 * mode), (2, 2)).copy_from(&block);
        local = local.apply(&SymplecticMap::new(m, DVector::zeros(4)).unwrap()).unwrap();
    }
    let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.3..0.3));
    let noise = &g * g.transpose();
    let mean = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
    GaussianState::new(mean, local.cov() + noise).unwrap()
}

/// Random explicitly separable state `Σ p_μ ρ_A^μ ⊗ σ_B^μ` and its terms.
pub fn random_product_terms<R: Rng>(rng: &mut R, cutoff: usize, n_terms: usize) -> Vec<ProductTerm> {
    let raw: Vec<f64> = (0..n_terms).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter()
        .map(|w| ProductTerm {
            weight: w / total,
            rho_a: random_density(&[cutoff], rng.random_range(1..=cutoff), rng).unwrap(),
            sigma_b: random_density(&[cutoff], rng.random_range(1..=cutoff), rng).unwrap(),
        })
        .collect()
}

pub fn mixture(terms: &[ProductTerm]) -> FockOperator {
    terms
        .iter()
        .map(|t| t.rho_a.kron(&t.sigma_b).scale(t.weight))
        .reduce(|a, b| a.add(&b).unwrap())
        .unwrap()
}

/// Asymptotic Kolmogorov–Smirnov p-value for statistic `d` on `n` samples.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powi(k as i32 - 1) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// KS statistic of `samples` against the CDF `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
