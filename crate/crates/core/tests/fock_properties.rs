mod common;

use cvmdi_core::fock::{
    duan_fock_witness, heterodyne_vacuum_projection, multimode_povm_element, p11_statistic, povm_element,
    povm_element_brute_force, random_density, random_hermitian, reconstruct_povm, separable_transform_check,
    tmsv_vector, witness_tilde, FockOperator, Partition, ProductTerm, TomographyGrid, CoherentProbe,
};
use cvmdi_core::sampler::RngStream;
use cvmdi_core::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use rayon::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn trace_identity_across_lambdas_and_cutoffs() {
    let cases: Vec<(f64, usize, u64)> = [0.3, 0.5, 0.7]
        .iter()
        .flat_map(|&l| [6usize, 8, 10].into_iter().map(move |d| (l, d)))
        .zip(0u64..)
        .map(|((l, d), k)| (l, d, k))
        .collect();
    let worst = cases
        .par_iter()
        .map(|&(lambda, d, k)| {
            let mut rng = RngStream::new(800, k).rng();
            let mut worst = 0.0f64;
            for _ in 0..4 {
                let rho = random_density(&[d, d], 3, &mut rng).unwrap();
                let w = random_hermitian(&[d, d], &mut rng).unwrap();
                let lhs = povm_element(&rho, lambda)
                    .unwrap()
                    .trace_product(&witness_tilde(&w, lambda).unwrap())
                    .unwrap()
                    .re;
                let rhs = (1.0 - lambda * lambda).powi(2) * rho.trace_product(&w).unwrap().re;
                worst = worst.max(rel(lhs, rhs));
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst < 1e-9, "relative residual {worst}");
}

#[test]
fn congruences_preserve_positivity() {
    let mut rng = RngStream::new(801, 0).rng();
    for k in 0..20 {
        let rho = random_density(&[4, 4], 1 + k % 16, &mut rng).unwrap();
        let lambda = 0.2 + 0.035 * k as f64;
        let m = povm_element(&rho, lambda).unwrap();
        assert!(m.is_hermitian());
        assert!(m.min_eigenvalue() >= -1e-14);
        assert!(m.max_eigenvalue() <= 1.0);
        let w = witness_tilde(&rho, lambda).unwrap();
        assert!(w.min_eigenvalue() >= -1e-12 * w.max_eigenvalue());
    }
}

// Coherent state |0.4⟩ on A and a thermal-like diagonal state on B, both
// truncated and renormalized.
fn smooth_state(d: usize) -> FockOperator {
    let mut v = CoherentProbe::unchecked(Complex64::new(0.4, 0.1), d).unwrap().vector();
    v /= Complex64::new(v.norm(), 0.0);
    let a = FockOperator::projector(vec![d], &v).unwrap();
    let weights: Vec<f64> = (0..d).map(|n| 0.3f64.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let b = (0..d)
        .map(|n| FockOperator::number_projector(vec![d], &[n]).unwrap().scale(weights[n] / total))
        .reduce(|x, y| x.add(&y).unwrap())
        .unwrap();
    a.kron(&b)
}

#[test]
fn literal_construction_converges_with_cutoff() {
    let r = 0.5f64;
    let lambda = r.tanh();
    let residuals: Vec<f64> = [6usize, 8, 10]
        .iter()
        .map(|&d| {
            let rho = smooth_state(d);
            let w = duan_fock_witness(d, 1.0).unwrap();
            let literal = povm_element_brute_force(&rho, r).unwrap();
            let lhs = literal.trace_product(&witness_tilde(&w, lambda).unwrap()).unwrap().re;
            let rhs = (1.0 - lambda * lambda).powi(2) * rho.trace_product(&w).unwrap().re;
            (lhs - rhs).abs()
        })
        .collect();
    assert!(residuals[1] < residuals[0] && residuals[2] < residuals[1], "{residuals:?}");
    let expected_ratio = lambda.powi(4);
    for w in residuals.windows(2) {
        assert!((w[1] / w[0] / expected_ratio - 1.0).abs() < 0.1, "{residuals:?}");
    }
}

#[test]
fn heterodyne_vacuum_small_radius() {
    let vacuum = FockOperator::number_projector(vec![4], &[0]).unwrap();
    let mut rng = RngStream::new(802, 0).rng();
    let est = heterodyne_vacuum_projection(&vacuum, 0.05, 10_000_000, &mut rng).unwrap();
    assert!((est.estimate - 1.0).abs() < 0.02, "{est:?}");
    assert_eq!(est.bias_bound, 0.0);
}

#[test]
fn heterodyne_matches_matrix_element() {
    let mut rng = RngStream::new(803, 0).rng();
    for k in 0..4 {
        let rho = random_density(&[5], 1 + k, &mut rng).unwrap();
        let est = heterodyne_vacuum_projection(&rho, 0.4, 400_000, &mut rng).unwrap();
        let exact = rho.matrix()[(0, 0)].re;
        let diff = est.estimate - exact;
        assert!(
            diff > -3.0 * est.std_error && diff < est.bias_bound + 3.0 * est.std_error,
            "state {k}: {} vs {exact} (bias ≤ {}, se {})",
            est.estimate,
            est.bias_bound,
            est.std_error
        );
    }
}

#[test]
fn three_mode_vacuum_and_product_across_partition() {
    let lambda = 0.45f64;
    let vac = FockOperator::number_projector(vec![3, 3, 3], &[0, 0, 0]).unwrap();
    let partition = Partition {
        a: vec![0, 1],
        b: vec![2],
    };
    let m = multimode_povm_element(&vac, lambda, &partition).unwrap();
    assert!((m.matrix()[(0, 0)].re - (1.0 - lambda * lambda).powi(3)).abs() < 1e-15);
    assert!((m.trace().re - m.matrix()[(0, 0)].re).abs() < 1e-15);

    let mut rng = RngStream::new(804, 0).rng();
    let rho_a = random_density(&[3, 3], 4, &mut rng).unwrap();
    let sigma_b = random_density(&[3], 2, &mut rng).unwrap();
    let m = multimode_povm_element(&rho_a.kron(&sigma_b), lambda, &partition).unwrap();
    let ma = cvmdi_core::fock::party_povm_element(&rho_a, lambda).unwrap();
    let nb = cvmdi_core::fock::party_povm_element(&sigma_b, lambda).unwrap();
    assert!(m.sub(&ma.kron(&nb)).unwrap().frobenius_norm() < 1e-15);
    assert!(ma.min_eigenvalue() >= -1e-15 && nb.min_eigenvalue() >= -1e-15);
    let bad = Partition {
        a: vec![0],
        b: vec![0, 2],
    };
    assert!(multimode_povm_element(&vac, lambda, &bad).is_err());
}

#[test]
fn separable_mixture_at_cutoff_eight() {
    let mut rng = RngStream::new(805, 0).rng();
    let terms = common::random_product_terms(&mut rng, 8, 3);
    let report = separable_transform_check(&terms, 0.6).unwrap();
    assert!(report.reconstruction_error < 1e-10);
    assert!(report.factors_psd);

    let pure = ProductTerm {
        weight: 1.0,
        rho_a: FockOperator::number_projector(vec![4], &[2]).unwrap(),
        sigma_b: FockOperator::number_projector(vec![4], &[1]).unwrap(),
    };
    assert_eq!(separable_transform_check(&[pure.clone()], 0.6).unwrap().reconstruction_error, 0.0);
    let mut half = pure;
    half.weight = 0.5;
    assert!(separable_transform_check(&[half], 0.6).is_err());
}

#[test]
fn double_success_examples() {
    let r = 0.3f64;
    let lambda = r.tanh();
    let zero = Complex64::new(0.0, 0.0);
    let vac = FockOperator::number_projector(vec![12, 12], &[0, 0]).unwrap();
    let p = p11_statistic(&vac, r, zero, zero).unwrap();
    assert!((p.value - (1.0 - lambda * lambda).powi(2)).abs() < 1e-14);

    let t = tmsv_vector(0.8, 12).unwrap().projector();
    let p = p11_statistic(&t, r, zero, zero).unwrap();
    let expected = (1.0 - lambda * lambda).powi(2) * t.matrix()[(0, 0)].re;
    assert!((p.value - expected).abs() < 1e-14);

    assert!(matches!(
        p11_statistic(&vac, r, Complex64::new(3.0, 0.0), zero),
        Err(Error::CutoffInadequate { .. })
    ));
    assert!(p11_statistic(&vac, 1.5, zero, zero).is_err());
}

#[test]
fn tomography_grid_errors() {
    let m = FockOperator::identity(vec![3, 3]).unwrap().scale(0.05);
    let same = vec![Complex64::new(0.3, 0.2); 9];
    let grid = TomographyGrid::simulate(&m, &same, &same).unwrap();
    assert!(matches!(reconstruct_povm(&grid, 3), Err(Error::IllConditioned(_))));
    let few = TomographyGrid::square_amplitudes(1.0, 2);
    let grid = TomographyGrid::simulate(&m, &few, &few).unwrap();
    assert!(matches!(
        reconstruct_povm(&grid, 3),
        Err(Error::Underdetermined { rows: 16, unknowns: 81 })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn double_success_routes_agree(seed in any::<u64>(), ar in -0.7f64..0.7, ai in -0.7f64..0.7, br in -0.7f64..0.7, bi in -0.7f64..0.7) {
        let mut rng = RngStream::new(seed, 0).rng();
        let rho = random_density(&[13, 13], 3, &mut rng).unwrap();
        let p = p11_statistic(&rho, 0.35, Complex64::new(ar, ai), Complex64::new(br, bi)).unwrap();
        prop_assert!((p.via_projection - p.via_povm).abs() < 1e-8);
        prop_assert!((0.0..=1.0).contains(&p.value));
    }

    #[test]
    fn npt_sign_is_preserved(seed in any::<u64>(), rank in 1usize..=9, lambda in 0.1f64..0.9) {
        let mut rng = RngStream::new(seed, 0).rng();
        let rho = random_density(&[3, 3], rank, &mut rng).unwrap();
        let a = rho.partial_transpose(&[1]).unwrap().min_eigenvalue();
        prop_assume!(a.abs() > 1e-9);
        let b = povm_element(&rho, lambda).unwrap().partial_transpose(&[1]).unwrap().min_eigenvalue();
        prop_assert_eq!(a < 0.0, b < 0.0);
    }
}
