use std::f64::consts::{PI, SQRT_2};

use cvmdi_core::priors::{
    bayesian_crb_sum, crb_sum_from_fim, fim, fim_gaussian, fim_numerical, fim_smooth_box, separable_mdi_bound,
    FisherMatrix, PriorSpec,
};
use cvmdi_core::quadrature::integrate_piecewise;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn crb_sum_increases_with_width(a in 0.01f64..100.0, b in 0.01f64..100.0) {
        prop_assume!((a - b).abs() > 1e-9 * a.max(b));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(bayesian_crb_sum(lo).unwrap() < bayesian_crb_sum(hi).unwrap());
    }

    #[test]
    fn bound_decreases_with_fisher_information(f in 0.01f64..50.0, extra in 0.01f64..50.0) {
        let small = crb_sum_from_fim(&FisherMatrix::diagonal(f));
        let large = crb_sum_from_fim(&FisherMatrix::diagonal(f + extra));
        prop_assert!(large < small);
    }

    #[test]
    fn box_bound_shrinks_as_delta_shrinks(l in 0.5f64..5.0, t in 0.05f64..1.0) {
        let wide = separable_mdi_bound(1.0, &PriorSpec::smooth_box(l, l).unwrap()).unwrap();
        let narrow = separable_mdi_bound(1.0, &PriorSpec::smooth_box(l, t * l).unwrap()).unwrap();
        prop_assert!(narrow.value <= wide.value + 1e-15);
    }
}

#[test]
fn smooth_box_density_is_normalized() {
    for l in [0.5, 1.0, 2.0, PI, 5.0] {
        for frac in [0.05, 0.25, 0.5, 0.75, 1.0] {
            let prior = PriorSpec::smooth_box(l, frac * l).unwrap();
            let mass = integrate_piecewise(|x| prior.density(x), &prior.breakpoints(), 1e-12);
            assert!((mass - 1.0).abs() < 1e-8, "l = {l}, δ = {}: {mass}", frac * l);
        }
    }
}

#[test]
fn numerical_fisher_matches_closed_forms_on_grid() {
    for sigma in [0.3, 1.0, SQRT_2, 4.0] {
        let numeric = fim_numerical(&PriorSpec::gaussian(sigma).unwrap()).unwrap();
        let exact = fim_gaussian(sigma).unwrap();
        assert!((numeric.matrix() - exact.matrix()).abs().max() < 1e-8 * exact.trace().max(1.0));
    }
    for l in [1.0, 2.0, PI] {
        for frac in [0.2, 0.5, 1.0] {
            let prior = PriorSpec::smooth_box(l, frac * l).unwrap();
            let numeric = fim_numerical(&prior).unwrap();
            let exact = fim_smooth_box(l, frac * l).unwrap();
            assert!((numeric.matrix() - exact.matrix()).abs().max() < 1e-6);
            assert_eq!(fim(&prior).unwrap(), exact);
        }
    }
}

#[test]
fn bound_examples() {
    let g = separable_mdi_bound(1.0, &PriorSpec::gaussian(2.0).unwrap()).unwrap();
    assert!((g.value - 0.8).abs() < 1e-15);
    assert!(!g.possibly_loose);
    let b = separable_mdi_bound(1.0, &PriorSpec::smooth_box(PI, PI).unwrap()).unwrap();
    assert!((b.value - 2.0 / 3.0).abs() < 1e-12);
    assert!((b.sigma_effective - SQRT_2).abs() < 1e-12);
    let narrow = separable_mdi_bound(1.0, &PriorSpec::smooth_box(PI, 1e-8).unwrap()).unwrap();
    assert!(narrow.possibly_loose);
    assert!(narrow.value < 1e-7);
    assert!(fim_smooth_box(1.0, 1e-6).unwrap().trace() > 1e6);
    assert!(fim_smooth_box(1.0, 2.0).is_err());
    assert!(fim_gaussian(0.0).is_err());
}
