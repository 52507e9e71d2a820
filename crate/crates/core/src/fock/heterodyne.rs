use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::states::CoherentProbe;
use super::FockOperator;
use crate::error::{invalid, Error, Result};

/// Vacuum-projection estimate from simulated heterodyne counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Upper bound on `E[estimate] − ⟨0|ρ|0⟩`: `Σ_{n≥1} ρ_nn R^{2n}/n!`.
    pub bias_bound: f64,
    pub radius: f64,
    pub samples: usize,
    pub hits: usize,
}

/// Estimates `⟨0|ρ|0⟩` by drawing heterodyne outcomes from the Husimi
/// function `Q(α) = ⟨α|ρ|α⟩/π` and counting those with `|α| ≤ R`,
/// normalized by the vacuum's disc probability `1 − e^{−R²}`.
///
/// Only the diagonal `ρ_nn` survives the angular integral over the disc, so
/// the estimator is unbiased for the vacuum and overestimates otherwise by
/// at most `bias_bound = O(R²)`.
pub fn heterodyne_vacuum_projection<R: Rng + ?Sized>(
    rho: &FockOperator,
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<HeterodyneEstimate> {
    if rho.n_modes() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "heterodyne estimate needs a single-mode state, got {} modes",
            rho.n_modes()
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius", format!("radius must be positive, got {radius}")));
    }
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    let d = rho.dim();
    let diag: Vec<f64> = (0..d).map(|n| rho.matrix()[(n, n)].re.max(0.0)).collect();
    let support = diag.iter().filter(|&&p| p > 0.0).count().max(1) as f64;
    let pick = WeightedIndex::new(&diag).map_err(|e| invalid("rho", format!("diagonal is not a distribution: {e}")))?;
    let gammas: Vec<Gamma<f64>> = (0..d)
        .map(|n| Gamma::new(n as f64 + 1.0, 1.0).expect("positive shape"))
        .collect();

    // Rejection sampling from Q with the phase-averaged Q as proposal;
    // Cauchy–Schwarz on a PSD ρ bounds Q/proposal by the support size.
    let mut hits = 0usize;
    let r2 = radius * radius;
    for _ in 0..samples {
        loop {
            let n = pick.sample(rng);
            let mod2 = gammas[n].sample(rng);
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let alpha = Complex64::from_polar(mod2.sqrt(), phase);
            let probe = CoherentProbe::unchecked(alpha, d)?.vector();
            let target = rho.expectation(&probe)?.re;
            let proposal: f64 = probe.iter().zip(&diag).map(|(c, p)| p * c.norm_sqr()).sum();
            if proposal <= 0.0 {
                continue;
            }
            if rng.random::<f64>() * support * proposal <= target {
                if mod2 <= r2 {
                    hits += 1;
                }
                break;
            }
        }
    }
    let norm = -(-r2).exp_m1();
    let fraction = hits as f64 / samples as f64;
    let std_error = (fraction * (1.0 - fraction) / samples as f64).sqrt() / norm;
    let mut bias_bound = 0.0;
    let mut weight = 1.0;
    for (n, p) in diag.iter().enumerate().skip(1) {
        weight *= r2 / n as f64;
        bias_bound += p * weight;
    }
    Ok(HeterodyneEstimate {
        estimate: fraction / norm,
        std_error,
        bias_bound,
        radius,
        samples,
        hits,
    })
}
