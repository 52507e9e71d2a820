use cvmdi_core::fock::{
    damping_factor, duan_fock_witness, energy_scale_witness, multimode_povm_element, povm_element,
    povm_element_brute_force, random_density, random_hermitian, reconstruct_povm, separable_transform_check,
    tmsv_vector, witness_tilde, Partition, ProductTerm, TomographyGrid, MAX_CUTOFF,
};
use cvmdi_core::sampler::RngStream;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{pick, require, CommonArgs, FileConfig, Format};
use crate::output::{emit, num, to_json};
use crate::{CliError, FockVerifyArgs};

const EQUIVALENCE_TOLERANCE: f64 = 1e-8;
const TRACE_TOLERANCE: f64 = 1e-9;
const SEPARABLE_TOLERANCE: f64 = 1e-10;
const TOMOGRAPHY_TOLERANCE: f64 = 1e-6;
const THREE_MODE_MAX_CUTOFF: usize = 6;

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    max_error: Option<f64>,
    tolerance: Option<f64>,
    detail: String,
}

impl Check {
    fn measured(name: &'static str, max_error: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name,
            passed: max_error <= tolerance,
            max_error: Some(max_error),
            tolerance: Some(tolerance),
            detail,
        }
    }

    fn failed(name: &'static str, err: cvmdi_core::Error) -> Self {
        Self {
            name,
            passed: false,
            max_error: None,
            tolerance: None,
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    cutoff: usize,
    lambda: f64,
    instances: usize,
    seed: u64,
    energy_scale: Option<f64>,
    checks: Vec<Check>,
    all_passed: bool,
}

struct Setup {
    cutoff: usize,
    lambda: f64,
    instances: usize,
    seed: u64,
}

impl Setup {
    fn rng(&self, check: u64, instance: usize) -> ChaCha8Rng {
        RngStream::new(self.seed, check * 1_000_000 + instance as u64).rng()
    }
}

fn equivalence(s: &Setup) -> cvmdi_core::Result<Check> {
    let d = s.cutoff;
    let r = s.lambda.atanh();
    // The literal construction renormalizes each truncated squeezed vacuum,
    // which scales the element by (1 − λ^{2d})^{-1} per mode.
    let renorm = (1.0 - s.lambda.powi(2 * d as i32)).powi(2);
    let (mut worst, mut raw) = (0.0f64, 0.0f64);
    for k in 0..s.instances {
        let rho = random_density(&[d, d], 1 + k % (d * d), &mut s.rng(1, k))?;
        let closed = povm_element(&rho, s.lambda)?;
        let literal = povm_element_brute_force(&rho, r)?;
        worst = worst.max(literal.scale(renorm).sub(&closed)?.frobenius_norm());
        raw = raw.max(literal.sub(&closed)?.frobenius_norm());
    }
    Ok(Check::measured(
        "closed-form-vs-partial-trace",
        worst,
        EQUIVALENCE_TOLERANCE,
        format!("Frobenius error at matching truncation; truncation discrepancy {raw:.3e}"),
    ))
}

fn trace_identity(s: &Setup) -> cvmdi_core::Result<Check> {
    let d = s.cutoff;
    let pre = (1.0 - s.lambda * s.lambda).powi(2);
    let mut worst = 0.0f64;
    for k in 0..s.instances {
        let mut rng = s.rng(2, k);
        let rho = random_density(&[d, d], 1 + k % (d * d), &mut rng)?;
        let w = random_hermitian(&[d, d], &mut rng)?;
        let lhs = povm_element(&rho, s.lambda)?.trace_product(&witness_tilde(&w, s.lambda)?)?.re;
        let rhs = pre * rho.trace_product(&w)?.re;
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    Ok(Check::measured(
        "trace-identity",
        worst,
        TRACE_TOLERANCE,
        "relative error of Tr[M W~] = (1-λ²)² Tr[ρ W]".into(),
    ))
}

fn separable_transform(s: &Setup) -> cvmdi_core::Result<Check> {
    let d = s.cutoff;
    let (mut worst, mut psd) = (0.0f64, true);
    for k in 0..s.instances {
        let mut rng = s.rng(3, k);
        let n_terms = 1 + k % 4;
        let total = (n_terms * (n_terms + 1) / 2) as f64;
        let terms = (0..n_terms)
            .map(|m| {
                Ok(ProductTerm {
                    weight: (m + 1) as f64 / total,
                    rho_a: random_density(&[d], 1 + (k + m) % d, &mut rng)?,
                    sigma_b: random_density(&[d], 1 + (k + 2 * m) % d, &mut rng)?,
                })
            })
            .collect::<cvmdi_core::Result<Vec<_>>>()?;
        let report = separable_transform_check(&terms, s.lambda)?;
        worst = worst.max(report.reconstruction_error);
        psd &= report.factors_psd;
    }
    let mut check = Check::measured(
        "separable-transform",
        worst,
        SEPARABLE_TOLERANCE,
        format!("all local factors positive: {psd}"),
    );
    check.passed &= psd;
    Ok(check)
}

fn three_mode(s: &Setup) -> cvmdi_core::Result<Check> {
    let d = s.cutoff.min(THREE_MODE_MAX_CUTOFF);
    let cutoffs = [d, d, d];
    let partition = Partition {
        a: vec![0, 1],
        b: vec![2],
    };
    let pre = (1.0 - s.lambda * s.lambda).powi(3);
    let mut worst = 0.0f64;
    for k in 0..s.instances {
        let mut rng = s.rng(4, k);
        let rho = random_density(&cutoffs, 1 + k % 8, &mut rng)?;
        let w = random_hermitian(&cutoffs, &mut rng)?;
        let m = multimode_povm_element(&rho, s.lambda, &partition)?;
        let lhs = m.trace_product(&witness_tilde(&w, s.lambda)?)?.re;
        let rhs = pre * rho.trace_product(&w)?.re;
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    Ok(Check::measured(
        "three-mode-identity",
        worst,
        TRACE_TOLERANCE,
        format!("relative error of Tr[M W~] = (1-λ²)³ Tr[ρ W] at cutoff {d}"),
    ))
}

fn damping(s: &Setup, energy_scale: Option<f64>) -> cvmdi_core::Result<Check> {
    let x = duan_fock_witness(s.cutoff, 1.0)?;
    let mut exact = true;
    for n in [1.0, 2.0, 5.0, 10.0] {
        let witness = energy_scale_witness(&x, n)?;
        let lower = witness.window().lower;
        exact &= witness.tilde(lower * (1.0 - 1e-9)).is_err();
        exact &= witness.tilde(lower).is_err();
        exact &= witness.tilde(0.5 * (1.0 + lower)).is_ok();
    }
    let asymptotic = (damping_factor(100.0)?.factor - 0.02).abs() / 0.02;
    let mut detail = format!("window edges exact: {exact}; N = 100 factor within {:.2}% of 2/N", 100.0 * asymptotic);
    let mut passed = exact && asymptotic <= 0.01;
    if let Some(n) = energy_scale {
        let witness = energy_scale_witness(&x, n)?;
        match witness.tilde(s.lambda) {
            Ok(_) => detail.push_str(&format!("; λ = {} accepted for N = {n}", s.lambda)),
            Err(e) => {
                passed = false;
                detail.push_str(&format!("; {e}"));
            }
        }
    }
    Ok(Check {
        name: "damping-window",
        passed,
        max_error: None,
        tolerance: None,
        detail,
    })
}

fn tomography(s: &Setup) -> cvmdi_core::Result<Check> {
    let amps = TomographyGrid::square_amplitudes(std::f64::consts::SQRT_2, 8);
    let tmsv = tmsv_vector(0.6, 3)?.projector();
    let random = random_density(&[3, 3], 3, &mut s.rng(6, 0))?;
    let mut worst = 0.0f64;
    let mut witness_value = f64::NAN;
    for (k, rho) in [tmsv, random].iter().enumerate() {
        let m = povm_element(rho, s.lambda)?;
        let rec = reconstruct_povm(&TomographyGrid::simulate(&m, &amps, &amps)?, 3)?;
        worst = worst.max(rec.operator.sub(&m)?.frobenius_norm());
        if k == 0 {
            let w_tilde = witness_tilde(&duan_fock_witness(3, 1.0)?, s.lambda)?;
            witness_value = rec.operator.trace_product(&w_tilde)?.re;
        }
    }
    let mut check = Check::measured(
        "tomography",
        worst,
        TOMOGRAPHY_TOLERANCE,
        format!("8x8x8x8 probe grid at cutoff 3; Tr[M^ W~] = {witness_value:.6e} for the squeezed vacuum"),
    );
    check.passed &= witness_value < 0.0;
    Ok(check)
}

pub fn run(c: &CommonArgs, f: &FileConfig, a: &FockVerifyArgs) -> Result<(), CliError> {
    let cutoff = pick(c.cutoff, f.cutoff, 8);
    let lambda = pick(a.lambda, f.lambda, 0.5);
    let instances = pick(a.instances, f.instances, 20);
    let seed = pick(c.seed, f.seed, 0);
    let energy_scale = a.energy_scale.or(f.energy_scale);
    let with_tomography = a.tomography || f.tomography.unwrap_or(false);
    require(
        (2..=MAX_CUTOFF).contains(&cutoff),
        format!("cutoff must lie in 2..={MAX_CUTOFF}, got {cutoff}"),
    )?;
    require(lambda > 0.0 && lambda < 1.0, format!("λ must lie in (0, 1), got {lambda}"))?;
    require(instances >= 1, "need at least one instance")?;
    if let Some(n) = energy_scale {
        crate::commands::cfg(damping_factor(n))?;
    }
    let format = pick(c.format, f.format, Format::Json);
    let out = c.out.clone().or_else(|| f.out.clone());

    let s = Setup {
        cutoff,
        lambda,
        instances,
        seed,
    };
    let mut checks = vec![
        equivalence(&s).unwrap_or_else(|e| Check::failed("closed-form-vs-partial-trace", e)),
        trace_identity(&s).unwrap_or_else(|e| Check::failed("trace-identity", e)),
        separable_transform(&s).unwrap_or_else(|e| Check::failed("separable-transform", e)),
        three_mode(&s).unwrap_or_else(|e| Check::failed("three-mode-identity", e)),
        damping(&s, energy_scale).unwrap_or_else(|e| Check::failed("damping-window", e)),
    ];
    if with_tomography {
        checks.push(tomography(&s).unwrap_or_else(|e| Check::failed("tomography", e)));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let report = VerifyReport {
        cutoff,
        lambda,
        instances,
        seed,
        energy_scale,
        all_passed: failed.is_empty(),
        checks,
    };
    let text = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut t = String::from("check,passed,max_error,tolerance\n");
            for ch in &report.checks {
                let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
                t.push_str(&format!("{},{},{},{}\n", ch.name, ch.passed, opt(ch.max_error), opt(ch.tolerance)));
            }
            t
        }
    };
    emit(out.as_deref(), &text)?;
    if failed.is_empty() {
        Ok(())
    } else {
        let details: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        Err(CliError::Verification(details.join("; ")))
    }
}
