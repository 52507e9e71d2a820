//! Priors over the coherent amplitudes and the Bayesian Cramér–Rao
//! machinery behind the separable bound.
//!
//! A prior is a product `P(α_x, α_p) = P₁(α_x) P₁(α_p)` of identical,
//! symmetric one-dimensional densities, so its Fisher information matrix is
//! diagonal. The separable players' best total estimation error of
//! `(α_x, α_p)` from a coherent state is lower-bounded by the Bayesian
//! right-logarithmic-derivative bound, which for such priors reduces to
//! `4 / (4 + Tr A)`. For the Gaussian prior that is `σ²/(1+σ²)` and it is
//! attained by heterodyne detection followed by the posterior mean.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::{integrate, integrate_piecewise};

/// Absolute tolerance used for every prior quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

/// Half-width of the integration window for the Gaussian prior, in units of σ.
const GAUSSIAN_SPAN: f64 = 12.0;

/// Distribution the trusted sources draw coherent amplitudes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// `P(α) = e^{−|α|²/σ²} / (πσ²)`: each component is normal with variance σ²/2.
    Gaussian { sigma: f64 },
    /// Product of smoothed indicators `I_{δ,l}(α_i)/l` on `[−l/2, l/2]`.
    SmoothBox { l: f64, delta: f64 },
}

impl PriorSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let prior = Self::Gaussian { sigma };
        prior.validate()?;
        Ok(prior)
    }

    pub fn smooth_box(l: f64, delta: f64) -> Result<Self> {
        let prior = Self::SmoothBox { l, delta };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { sigma } => check_sigma(sigma),
            Self::SmoothBox { l, delta } => {
                if !(l.is_finite() && l > 0.0) {
                    return Err(invalid("l", format!("box size must be positive, got {l}")));
                }
                if !(delta > 0.0 && delta <= l) {
                    return Err(invalid(
                        "delta",
                        format!("smoothing width must satisfy 0 < δ ≤ l, got δ = {delta}, l = {l}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Support of the one-dimensional marginal (truncated for the Gaussian).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Gaussian { sigma } => (-GAUSSIAN_SPAN * sigma, GAUSSIAN_SPAN * sigma),
            Self::SmoothBox { l, delta } => (-(l + delta) / 2.0, (l + delta) / 2.0),
        }
    }

    /// Points where the marginal density changes its analytic form.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Self::Gaussian { .. } => {
                let (a, b) = self.support();
                vec![a, 0.0, b]
            }
            Self::SmoothBox { l, delta } => {
                let mut pts = vec![
                    -(l + delta) / 2.0,
                    -(l - delta) / 2.0,
                    (l - delta) / 2.0,
                    (l + delta) / 2.0,
                ];
                pts.dedup();
                pts
            }
        }
    }

    /// One-dimensional marginal density `P₁(x)`.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => (-(x * x) / (sigma * sigma)).exp() / (PI.sqrt() * sigma),
            Self::SmoothBox { l, delta } => smooth_indicator(x, l, delta).0 / l,
        }
    }

    /// `dP₁/dx`.
    pub fn density_derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => -2.0 * x / (sigma * sigma) * self.density(x),
            Self::SmoothBox { l, delta } => smooth_indicator(x, l, delta).1 / l,
        }
    }

    /// Marginal cumulative distribution, in closed form.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 0.5 * erfc_via_quadrature(-x / sigma),
            Self::SmoothBox { l, delta } => {
                if x > 0.0 {
                    1.0 - smooth_box_left_mass(-x, l, delta) / l
                } else {
                    smooth_box_left_mass(x, l, delta) / l
                }
            }
        }
    }

    /// Variance of each amplitude component.
    pub fn component_variance(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma * sigma / 2.0,
            Self::SmoothBox { .. } => integrate_piecewise(
                |x| x * x * self.density(x),
                &self.breakpoints(),
                QUADRATURE_TOLERANCE,
            ),
        }
    }

    /// Width of the Gaussian prior with the same Fisher information.
    pub fn equivalent_sigma(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma,
            Self::SmoothBox { l, delta } => (2.0 * l * delta).sqrt() / PI,
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(invalid("sigma", format!("prior width must be positive, got {sigma}")))
    }
}

/// `(I_{δ,l}(x), I'_{δ,l}(x))`, written with half-angle forms so the ramps
/// keep full relative precision where `I → 0`.
fn smooth_indicator(x: f64, l: f64, delta: f64) -> (f64, f64) {
    let s = x.abs() - l / 2.0;
    if s <= -delta / 2.0 {
        return (1.0, 0.0);
    }
    if s >= delta / 2.0 {
        return (0.0, 0.0);
    }
    // On the right ramp I = ½(1 − sin(πs/δ)) = sin²(u) with u = π/4 − πs/(2δ).
    let u = FRAC_PI_4 - PI * s / (2.0 * delta);
    let value = u.sin().powi(2);
    let slope = -(PI / (2.0 * delta)) * (2.0 * u).sin();
    (value, if x >= 0.0 { slope } else { -slope })
}

/// `∫_{-∞}^{x} I_{δ,l}`, valid for `x ≤ 0`.
fn smooth_box_left_mass(x: f64, l: f64, delta: f64) -> f64 {
    let s = x + l / 2.0;
    if s <= -delta / 2.0 {
        0.0
    } else if s <= delta / 2.0 {
        0.5 * (s + delta / 2.0) - delta / (2.0 * PI) * (PI * s / delta).cos()
    } else {
        delta / 2.0 + (s - delta / 2.0)
    }
}

/// `erfc(z)` via `2/√π ∫_z^∞ e^{−t²} dt`, accurate to ~1e-14.
fn erfc_via_quadrature(z: f64) -> f64 {
    if z < 0.0 {
        return 2.0 - erfc_via_quadrature(-z);
    }
    let upper = z + 40.0_f64.sqrt();
    2.0 / PI.sqrt() * integrate(|t: f64| (-t * t).exp(), z, upper, 1e-15)
}

/// Fisher information matrix of a prior over `(α_x, α_p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix(pub Matrix2<f64>);

impl FisherMatrix {
    pub fn new(matrix: Matrix2<f64>) -> Result<Self> {
        if (matrix[(0, 1)] - matrix[(1, 0)]).abs() > 1e-12 * matrix.norm().max(1.0) {
            return Err(invalid("fim", "Fisher information must be symmetric"));
        }
        let eig = matrix.symmetric_eigenvalues();
        if eig.min() < -1e-12 * matrix.norm().max(1.0) {
            return Err(invalid("fim", "Fisher information must be positive semidefinite"));
        }
        Ok(Self(matrix))
    }

    pub fn diagonal(value: f64) -> Self {
        Self(Matrix2::new(value, 0.0, 0.0, value))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn to_rows(&self) -> [[f64; 2]; 2] {
        [[self.0[(0, 0)], self.0[(0, 1)]], [self.0[(1, 0)], self.0[(1, 1)]]]
    }
}

/// `diag(2/σ², 2/σ²)`.
pub fn fim_gaussian(sigma: f64) -> Result<FisherMatrix> {
    check_sigma(sigma)?;
    Ok(FisherMatrix::diagonal(2.0 / (sigma * sigma)))
}

/// `diag(π²/(lδ), π²/(lδ))`.
pub fn fim_smooth_box(l: f64, delta: f64) -> Result<FisherMatrix> {
    PriorSpec::smooth_box(l, delta)?;
    Ok(FisherMatrix::diagonal(PI * PI / (l * delta)))
}

pub fn fim(prior: &PriorSpec) -> Result<FisherMatrix> {
    match *prior {
        PriorSpec::Gaussian { sigma } => fim_gaussian(sigma),
        PriorSpec::SmoothBox { l, delta } => fim_smooth_box(l, delta),
    }
}

/// Evaluates the defining integral `A_ij = ∫∫ P ∂_i log P ∂_j log P` by
/// nested two-dimensional quadrature of the joint density.
pub fn fim_numerical(prior: &PriorSpec) -> Result<FisherMatrix> {
    prior.validate()?;
    let breaks = prior.breakpoints();
    let joint = |x: f64, p: f64| prior.density(x) * prior.density(p);
    let score = |y: f64| {
        let d = prior.density(y);
        if d > 0.0 {
            prior.density_derivative(y) / d
        } else {
            0.0
        }
    };
    let entry = |i: usize, j: usize| {
        integrate_piecewise(
            |x| {
                integrate_piecewise(
                    |p| {
                        let grad = [score(x), score(p)];
                        joint(x, p) * grad[i] * grad[j]
                    },
                    &breaks,
                    QUADRATURE_TOLERANCE,
                )
            },
            &breaks,
            QUADRATURE_TOLERANCE,
        )
    };
    let xx = entry(0, 0);
    let xp = entry(0, 1);
    let pp = entry(1, 1);
    FisherMatrix::new(Matrix2::new(xx, xp, xp, pp))
}

/// Minimal total variance `σ²/(1+σ²)` of estimating `(α_x, α_p)` under the
/// Gaussian prior.
pub fn bayesian_crb_sum(sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if sigma.is_infinite() {
        return Ok(1.0);
    }
    let s2 = sigma * sigma;
    Ok(s2 / (1.0 + s2))
}

/// Bayesian RLD bound on the summed variance for a coherent-state displacement
/// with prior information `fim`: `4 / (4 + Tr A)`.
pub fn crb_sum_from_fim(fim: &FisherMatrix) -> f64 {
    4.0 / (4.0 + fim.trace())
}

/// Separable bound on `⟨MDIEW_κ⟩` for a given prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableBound {
    pub value: f64,
    pub crb_sum: f64,
    /// Gaussian width with the same Fisher information.
    pub sigma_effective: f64,
    /// Set when the Cramér–Rao bound is not known to be attainable.
    pub possibly_loose: bool,
}

/// `½(κ² + κ⁻²) · crb_sum(prior)`.
pub fn separable_mdi_bound(kappa: f64, prior: &PriorSpec) -> Result<SeparableBound> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa", format!("κ must be positive, got {kappa}")));
    }
    prior.validate()?;
    let weight = 0.5 * (kappa * kappa + 1.0 / (kappa * kappa));
    let (crb_sum, sigma_effective, possibly_loose) = match *prior {
        PriorSpec::Gaussian { sigma } => (bayesian_crb_sum(sigma)?, sigma, false),
        PriorSpec::SmoothBox { l, delta } if delta == l => {
            let sigma = std::f64::consts::SQRT_2 * l / PI;
            (bayesian_crb_sum(sigma)?, sigma, false)
        }
        PriorSpec::SmoothBox { l, delta } => {
            let a = fim_smooth_box(l, delta)?;
            (crb_sum_from_fim(&a), prior.equivalent_sigma(), true)
        }
    };
    Ok(SeparableBound {
        value: weight * crb_sum,
        crb_sum,
        sigma_effective,
        possibly_loose,
    })
}
