//! Duan-type entanglement witnesses and their measurement-device-independent
//! counterparts.
//!
//! For a two-mode state,
//! `EW_κ = Var(κx_A − x_B/κ) + Var(κp_A + p_B/κ) ≥ (κ² + κ⁻²)/2`
//! on every separable state. The MDI version scores rounds of the
//! beam-splitter scheme through `U_κ² + V_κ²`; separable players cannot push
//! its mean below `(κ² + κ⁻²)/2 · σ²/(1+σ²)` under a Gaussian prior of width
//! σ, while the homodyne scheme achieves `½((κ² + κ⁻²)/2 + EW_κ)`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianState, LossChannel, SymplecticMap};
use crate::priors::{separable_mdi_bound, PriorSpec};
use crate::sampler::{jackknife_mean, MdiSample};

/// Number of standard errors a score must clear to certify entanglement.
pub const CERTIFICATION_SIGMAS: f64 = 3.0;

/// Rotation grid points per mode in [`optimize_witness`].
pub const ROTATION_GRID: usize = 64;

/// Default search window for `ln κ`.
pub const LOG_KAPPA_RANGE: (f64, f64) = (-3.0, 3.0);

const GOLDEN_TOLERANCE: f64 = 1e-8;

/// Serializes non-finite numbers as `null` and reads `null` back as `+∞`.
pub mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(invalid("kappa", format!("κ must be positive and finite, got {kappa}")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 {
        Ok(())
    } else {
        Err(invalid("sigma", format!("σ must be positive, got {sigma}")))
    }
}

fn check_eta(name: &'static str, eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(invalid(name, format!("loss must lie in [0, 1], got {eta}")))
    }
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn squeeze(s: f64) -> Matrix2<f64> {
    Matrix2::new(s.exp(), 0.0, 0.0, (-s).exp())
}

/// κ plus a local symplectic pre-transformation of each mode selecting which
/// quadratures enter the witness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessSpec {
    pub kappa: f64,
    pub orientation_a: [[f64; 2]; 2],
    pub orientation_b: [[f64; 2]; 2],
}

impl WitnessSpec {
    const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

    pub fn new(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self {
            kappa,
            orientation_a: Self::IDENTITY,
            orientation_b: Self::IDENTITY,
        })
    }

    pub fn with_orientation(kappa: f64, a: Matrix2<f64>, b: Matrix2<f64>) -> Result<Self> {
        let spec = Self {
            kappa,
            orientation_a: to_rows(&a),
            orientation_b: to_rows(&b),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Phase rotations `θ_A`, `θ_B` of the two modes.
    pub fn with_rotations(kappa: f64, theta_a: f64, theta_b: f64) -> Result<Self> {
        Self::with_orientation(kappa, rotation(theta_a), rotation(theta_b))
    }

    pub fn validate(&self) -> Result<()> {
        check_kappa(self.kappa)?;
        for (name, block) in [("orientation_a", self.orientation_a), ("orientation_b", self.orientation_b)] {
            let det = from_rows(&block).determinant();
            if !((det - 1.0).abs() < 1e-9) {
                return Err(invalid(name, format!("orientation block must have unit determinant, got {det}")));
            }
        }
        Ok(())
    }

    pub fn orientation(&self) -> (Matrix2<f64>, Matrix2<f64>) {
        (from_rows(&self.orientation_a), from_rows(&self.orientation_b))
    }

    pub fn has_identity_orientation(&self) -> bool {
        self.orientation_a == Self::IDENTITY && self.orientation_b == Self::IDENTITY
    }

    /// Applies the orientation blocks to a two-mode state.
    pub fn orient(&self, state: &GaussianState) -> Result<GaussianState> {
        check_two_modes(state)?;
        self.validate()?;
        let (a, b) = self.orientation();
        state
            .apply(&SymplecticMap::local(2, 0, a)?)?
            .apply(&SymplecticMap::local(2, 1, b)?)
    }
}

fn to_rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn from_rows(r: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn check_two_modes(state: &GaussianState) -> Result<()> {
    if state.n_modes() == 2 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "witness needs a two-mode state, got {} modes",
            state.n_modes()
        )))
    }
}

/// Loss and squeezing of a lossy two-mode squeezed vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub eta_a: f64,
    pub eta_b: f64,
    pub r: f64,
}

impl NoiseParams {
    pub fn new(eta_a: f64, eta_b: f64, r: f64) -> Result<Self> {
        let params = Self { eta_a, eta_b, r };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_eta("eta_a", self.eta_a)?;
        check_eta("eta_b", self.eta_b)?;
        if !self.r.is_finite() {
            return Err(invalid("r", format!("squeezing must be finite, got {}", self.r)));
        }
        Ok(())
    }

    /// The corresponding Gaussian state, built by applying loss to each arm.
    pub fn state(&self) -> Result<GaussianState> {
        self.validate()?;
        GaussianState::tmsv(self.r)?
            .apply_loss(LossChannel::new(0, self.eta_a)?)?
            .apply_loss(LossChannel::new(1, self.eta_b)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EntangledCertified,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    #[serde(with = "infinite_as_null")]
    pub std_error: f64,
    pub bound: f64,
    pub kappa: f64,
    #[serde(with = "infinite_as_null")]
    pub sigma: f64,
    pub verdict: Verdict,
}

impl ScoreReport {
    pub fn new(score: f64, std_error: f64, bound: f64, kappa: f64, sigma: f64) -> Self {
        let verdict = if score + CERTIFICATION_SIGMAS * std_error < bound {
            Verdict::EntangledCertified
        } else {
            Verdict::Inconclusive
        };
        Self {
            score,
            std_error,
            bound,
            kappa,
            sigma,
            verdict,
        }
    }
}

/// `Var(κx_A − x_B/κ) + Var(κp_A + p_B/κ)` after orientation.
pub fn duan_ew(state: &GaussianState, spec: &WitnessSpec) -> Result<f64> {
    let oriented = spec.orient(state)?;
    let k = spec.kappa;
    let u = DVector::from_vec(vec![k, 0.0, -1.0 / k, 0.0]);
    let v = DVector::from_vec(vec![0.0, k, 0.0, 1.0 / k]);
    Ok(oriented.variance_of(&u) + oriented.variance_of(&v))
}

/// `(κ² + κ⁻²)/2`.
pub fn separable_bound_ew(kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    Ok(0.5 * (kappa * kappa + 1.0 / (kappa * kappa)))
}

/// `(κ² + κ⁻²)/2 · σ²/(1+σ²)`; `σ = ∞` gives the plain separable bound.
pub fn mdi_bound(kappa: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let weight = if sigma.is_infinite() {
        1.0
    } else {
        sigma * sigma / (1.0 + sigma * sigma)
    };
    Ok(separable_bound_ew(kappa)? * weight)
}

/// Mean of `U_κ² + V_κ²` with jackknife error, against the Gaussian-prior bound.
///
/// Orientation blocks describe a physical change of the measured
/// quadratures and cannot be applied to recorded outcomes, so only identity
/// orientation is accepted.
pub fn mdi_score_from_samples(
    samples: &[MdiSample],
    spec: &WitnessSpec,
    sigma: f64,
) -> Result<ScoreReport> {
    let bound = mdi_bound(spec.kappa, sigma)?;
    let (score, std_error) = sample_score(samples, spec)?;
    Ok(ScoreReport::new(score, std_error, bound, spec.kappa, sigma))
}

/// As [`mdi_score_from_samples`] with the bound taken from an arbitrary prior.
pub fn mdi_score_with_prior(
    samples: &[MdiSample],
    spec: &WitnessSpec,
    prior: &PriorSpec,
) -> Result<ScoreReport> {
    let bound = separable_mdi_bound(spec.kappa, prior)?;
    let (score, std_error) = sample_score(samples, spec)?;
    Ok(ScoreReport::new(score, std_error, bound.value, spec.kappa, bound.sigma_effective))
}

fn sample_score(samples: &[MdiSample], spec: &WitnessSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    if !spec.has_identity_orientation() {
        return Err(invalid(
            "orientation",
            "recorded outcomes can only be scored with identity orientation",
        ));
    }
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.mdiew(spec.kappa)).collect();
    jackknife_mean(&values)
}

/// Expected score of the homodyne scheme: `½((κ² + κ⁻²)/2 + EW_κ)`.
pub fn mdi_score_analytic(state: &GaussianState, spec: &WitnessSpec) -> Result<f64> {
    Ok(0.5 * (separable_bound_ew(spec.kappa)? + duan_ew(state, spec)?))
}

/// Smallest prior width σ for which the homodyne scheme on `state` beats the
/// separable bound in expectation, or `None` if no width suffices.
pub fn minimal_certifying_sigma(state: &GaussianState, spec: &WitnessSpec) -> Result<Option<f64>> {
    let ratio = mdi_score_analytic(state, spec)? / separable_bound_ew(spec.kappa)?;
    if ratio >= 1.0 {
        return Ok(None);
    }
    Ok(Some((ratio / (1.0 - ratio)).sqrt()))
}

/// Closed-form `EW_κ` of a two-mode squeezed vacuum after losses `η_A`, `η_B`.
pub fn noisy_tmsv_ew(params: &NoiseParams, kappa: f64) -> Result<f64> {
    params.validate()?;
    check_kappa(kappa)?;
    let NoiseParams { eta_a, eta_b, r } = *params;
    let ta = (1.0 - eta_a).sqrt();
    let tb = (1.0 - eta_b).sqrt();
    let minus = kappa * ta - tb / kappa;
    let plus = kappa * ta + tb / kappa;
    Ok(0.5 * (kappa * kappa * eta_a + eta_b / (kappa * kappa))
        + 0.25 * (2.0 * r).exp() * minus * minus
        + 0.25 * (-2.0 * r).exp() * plus * plus)
}

/// κ cancelling the anti-squeezed term: `((1−η_B)/(1−η_A))^{1/4}`.
pub fn optimal_kappa(eta_a: f64, eta_b: f64) -> Result<f64> {
    check_eta("eta_a", eta_a)?;
    check_eta("eta_b", eta_b)?;
    if eta_a == 1.0 || eta_b == 1.0 {
        return Err(Error::NoBalancingKappa(format!(
            "η_A = {eta_a}, η_B = {eta_b}: a fully lossy arm carries no correlations"
        )));
    }
    Ok(((1.0 - eta_b) / (1.0 - eta_a)).powf(0.25))
}

/// Expected score at κ = 1 with equal losses: `½(1 + EW₁)`.
pub fn symmetric_mdiew(r: f64, eta: f64) -> Result<f64> {
    let ew = noisy_tmsv_ew(&NoiseParams::new(eta, eta, r)?, 1.0)?;
    Ok(0.5 * (1.0 + ew))
}

/// Largest symmetric loss that still allows certification at width σ in the
/// limit of infinite squeezing, clamped to `[0, 1]`.
pub fn certification_eta_limit(sigma: f64) -> Result<f64> {
    let b = mdi_bound(1.0, sigma)?;
    Ok((2.0 * b - 1.0).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub r: f64,
    pub eta: f64,
    pub mdiew_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub sigma: f64,
    pub eta: f64,
    /// Squeezing at which the expected score meets the bound; `∞` when the
    /// bound is never reached.
    #[serde(with = "infinite_as_null")]
    pub r_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourTable {
    pub values: Vec<ContourPoint>,
    pub boundaries: Vec<BoundaryPoint>,
}

impl ContourTable {
    pub fn values_csv(&self) -> String {
        let mut out = String::from("r,eta,mdiew_value\n");
        for p in &self.values {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p.r, p.eta, p.mdiew_value));
        }
        out
    }

    pub fn boundary_csv(&self) -> String {
        let mut out = String::from("sigma,eta,r_star\n");
        for p in &self.boundaries {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p.sigma, p.eta, p.r_star));
        }
        out
    }
}

/// Squeezing at which the symmetric-loss score equals `bound`.
///
/// The score decreases monotonically in `r` from 1 towards `½(1+η)`, so the
/// crossing is bracketed by doubling and then bisected.
pub fn boundary_r_star(eta: f64, bound: f64) -> Result<f64> {
    check_eta("eta", eta)?;
    let f = |r: f64| symmetric_mdiew(r, eta).map(|v| v - bound);
    if f(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    if 0.5 * (1.0 + eta) >= bound {
        return Ok(f64::INFINITY);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expected κ = 1 score on an `(r, η)` grid with symmetric losses, plus the
/// certification boundary `r*(η)` for each prior width in `sigma_list`.
pub fn contour_scan(r_grid: &[f64], eta_grid: &[f64], sigma_list: &[f64]) -> Result<ContourTable> {
    let cells: Vec<(f64, f64)> = r_grid
        .iter()
        .flat_map(|&r| eta_grid.iter().map(move |&eta| (r, eta)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(r, eta)| {
            Ok(ContourPoint {
                r,
                eta,
                mdiew_value: symmetric_mdiew(r, eta)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = sigma_list
        .iter()
        .flat_map(|&s| eta_grid.iter().map(move |&eta| (s, eta)))
        .collect();
    let boundaries = pairs
        .par_iter()
        .map(|&(sigma, eta)| {
            Ok(BoundaryPoint {
                sigma,
                eta,
                r_star: boundary_r_star(eta, mdi_bound(1.0, sigma)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContourTable { values, boundaries })
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Result of [`optimize_witness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessOptimum {
    pub spec: WitnessSpec,
    pub ew: f64,
    pub bound: f64,
    /// `ew − bound`; negative means the witness detects entanglement.
    pub slack: f64,
    pub used_standard_form: bool,
}

// Covariance blocks of a two-mode state: [[A, C], [Cᵀ, B]].
#[derive(Debug, Clone, Copy)]
struct Blocks {
    a: Matrix2<f64>,
    b: Matrix2<f64>,
    c: Matrix2<f64>,
}

impl Blocks {
    fn of(cov: &DMatrix<f64>) -> Self {
        let block = |r: usize, c: usize| Matrix2::new(cov[(r, c)], cov[(r, c + 1)], cov[(r + 1, c)], cov[(r + 1, c + 1)]);
        Self {
            a: block(0, 0),
            b: block(2, 2),
            c: block(0, 2),
        }
    }

    fn transformed(&self, sa: &Matrix2<f64>, sb: &Matrix2<f64>) -> Self {
        Self {
            a: sa * self.a * sa.transpose(),
            b: sb * self.b * sb.transpose(),
            c: sa * self.c * sb.transpose(),
        }
    }

    fn slack(&self, kappa: f64) -> f64 {
        let k2 = kappa * kappa;
        k2 * (self.a.trace() - 0.5) + (self.b.trace() - 0.5) / k2 - 2.0 * self.c[(0, 0)]
            + 2.0 * self.c[(1, 1)]
    }

    /// Golden-section minimum of the slack over `ln κ ∈ range`.
    fn best_kappa(&self, range: (f64, f64)) -> (f64, f64) {
        let g = |t: f64| self.slack(t.exp());
        let t = golden_section(g, range.0, range.1, GOLDEN_TOLERANCE);
        (t.exp(), g(t))
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [(a, f(a)), (mid, f(mid)), (b, f(b))]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(t, _)| t)
        .expect("three candidates")
}

/// Minimizes `value(params)` from `start` by compass search with shrinking
/// steps.
fn pattern_search<F: Fn(&[f64]) -> f64>(value: F, start: &[f64], step: f64, min_step: f64) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut best = value(&x);
    let mut h = step;
    while h > min_step {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += dir * h;
                let v = value(&y);
                if v < best - 1e-15 * (1.0 + best.abs()) {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, best)
}

fn inverse_sqrt(m: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = SymmetricEigen::new(*m);
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Searches κ and local quadrature orientations for the most negative
/// `EW_κ − (κ² + κ⁻²)/2`.
///
/// A `ROTATION_GRID × ROTATION_GRID` grid of phase rotations is refined
/// locally, with κ found by golden section on `ln κ ∈ log_kappa_range`. If no
/// violation turns up, the state is brought to standard form by local
/// symplectics and local squeezings are searched as well.
pub fn optimize_witness(state: &GaussianState, log_kappa_range: (f64, f64)) -> Result<WitnessOptimum> {
    check_two_modes(state)?;
    if !(log_kappa_range.0 < log_kappa_range.1) {
        return Err(invalid("kappa_range", "empty ln κ range"));
    }
    let blocks = Blocks::of(state.cov());
    let rotated = |ta: f64, tb: f64| {
        let (ra, rb) = (rotation(ta), rotation(tb));
        let (kappa, slack) = blocks.transformed(&ra, &rb).best_kappa(log_kappa_range);
        (ra, rb, kappa, slack)
    };
    let step = 2.0 * std::f64::consts::PI / ROTATION_GRID as f64;
    let grid: Vec<(usize, usize)> = (0..ROTATION_GRID)
        .flat_map(|i| (0..ROTATION_GRID).map(move |j| (i, j)))
        .collect();
    let scored: Vec<(usize, usize, f64)> = grid
        .par_iter()
        .map(|&(i, j)| (i, j, rotated(i as f64 * step, j as f64 * step).3))
        .collect();
    let lowest = scored.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    // Ties (phase-symmetric states) go to the rotation closest to identity.
    let wrap = |k: usize| k.min(ROTATION_GRID - k);
    let (bi, bj, _) = *scored
        .iter()
        .filter(|c| c.2 <= lowest + 1e-12 * (1.0 + lowest.abs()))
        .min_by_key(|c| (wrap(c.0) + wrap(c.1), c.0, c.1))
        .expect("non-empty grid");
    let (angles, _) = pattern_search(
        |t| rotated(t[0], t[1]).3,
        &[bi as f64 * step, bj as f64 * step],
        step / 2.0,
        1e-10,
    );
    let (ra, rb, kappa, slack) = rotated(angles[0], angles[1]);
    let mut best = (ra, rb, kappa, slack, false);

    if slack >= 0.0 {
        if let Some(candidate) = standard_form_search(&blocks, log_kappa_range) {
            if candidate.3 < best.3 {
                best = (candidate.0, candidate.1, candidate.2, candidate.3, true);
            }
        }
    }
    let (sa, sb, kappa, _, used_standard_form) = best;
    let spec = WitnessSpec::with_orientation(kappa, sa, sb)?;
    let ew = duan_ew(state, &spec)?;
    let bound = separable_bound_ew(kappa)?;
    Ok(WitnessOptimum {
        spec,
        ew,
        bound,
        slack: ew - bound,
        used_standard_form,
    })
}

fn standard_form_search(
    blocks: &Blocks,
    log_kappa_range: (f64, f64),
) -> Option<(Matrix2<f64>, Matrix2<f64>, f64, f64)> {
    let (det_a, det_b) = (blocks.a.determinant(), blocks.b.determinant());
    if !(det_a > 0.0 && det_b > 0.0) {
        return None;
    }
    // Local Williamson: S A Sᵀ = √det(A) · I.
    let wa = inverse_sqrt(&blocks.a) * det_a.powf(0.25);
    let wb = inverse_sqrt(&blocks.b) * det_b.powf(0.25);
    let normal = blocks.transformed(&wa, &wb);
    // Rotations diagonalizing the correlation block.
    let svd = normal.c.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let fix = |m: Matrix2<f64>| {
        if m.determinant() < 0.0 {
            Matrix2::new(1.0, 0.0, 0.0, -1.0) * m
        } else {
            m
        }
    };
    let ra = fix(u.transpose());
    let rb = fix(vt);
    let base_a = ra * wa;
    let base_b = rb * wb;
    let base = blocks.transformed(&base_a, &base_b);
    let flips = [0.0, 0.5, 1.0, 1.5].map(|q| rotation(q * std::f64::consts::PI));
    let evaluate = |sa: f64, sb: f64, flip: &Matrix2<f64>| {
        let (ma, mb) = (squeeze(sa), flip * squeeze(sb));
        base.transformed(&ma, &mb).best_kappa(log_kappa_range)
    };
    let grid = linspace(-4.0, 4.0, 81);
    let mut best: Option<(Matrix2<f64>, Matrix2<f64>, f64, f64)> = None;
    for flip in &flips {
        let (mut start, mut start_val) = ((0.0, 0.0), f64::INFINITY);
        for &sa in &grid {
            for &sb in &grid {
                let v = evaluate(sa, sb, flip).1;
                if v < start_val {
                    start = (sa, sb);
                    start_val = v;
                }
            }
        }
        let (s, _) = pattern_search(|p| evaluate(p[0], p[1], flip).1, &[start.0, start.1], 0.05, 1e-12);
        let (kappa, slack) = evaluate(s[0], s[1], flip);
        if best.as_ref().is_none_or(|b| slack < b.3) {
            best = Some((squeeze(s[0]) * base_a, flip * squeeze(s[1]) * base_b, kappa, slack));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duan_examples() {
        let one = WitnessSpec::new(1.0).unwrap();
        assert!((duan_ew(&GaussianState::vacuum(2), &one).unwrap() - 1.0).abs() < 1e-15);
        let t = GaussianState::tmsv(0.5).unwrap();
        assert!((duan_ew(&t, &one).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let coh = GaussianState::coherent(1.0, -2.0)
            .unwrap()
            .tensor(&GaussianState::coherent(0.3, 0.7).unwrap());
        for k in [0.3, 1.0, 2.5] {
            let spec = WitnessSpec::new(k).unwrap();
            let v = duan_ew(&coh, &spec).unwrap();
            assert!((v - separable_bound_ew(k).unwrap()).abs() < 1e-14);
        }
        assert!(WitnessSpec::new(0.0).is_err());
        assert!(duan_ew(&GaussianState::vacuum(3), &one).is_err());
    }

    #[test]
    fn bounds() {
        assert_eq!(separable_bound_ew(1.0).unwrap(), 1.0);
        assert_eq!(separable_bound_ew(2.0).unwrap(), 17.0 / 8.0);
        assert_eq!(mdi_bound(1.0, f64::INFINITY).unwrap(), 1.0);
        assert!((mdi_bound(1.0, 2.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((mdi_bound(2.0, 1.0).unwrap() - 17.0 / 16.0).abs() < 1e-15);
        assert!(mdi_bound(1.0, 0.0).is_err());
        assert!(separable_bound_ew(-1.0).is_err());
    }

    #[test]
    fn verdict_rule() {
        let r = ScoreReport::new(0.7, 0.01, 0.8, 1.0, 2.0);
        assert_eq!(r.verdict, Verdict::EntangledCertified);
        let r = ScoreReport::new(0.78, 0.01, 0.8, 1.0, 2.0);
        assert_eq!(r.verdict, Verdict::Inconclusive);
        let r = ScoreReport::new(0.1, f64::INFINITY, 0.8, 1.0, f64::INFINITY);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn report_json_uses_null_for_infinity() {
        let r = ScoreReport::new(0.5, f64::INFINITY, 1.0, 1.0, f64::INFINITY);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"std_error\":null"));
        assert!(text.contains("\"sigma\":null"));
        assert!(text.contains("\"verdict\":\"inconclusive\""));
        let back: ScoreReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn analytic_score_examples() {
        let one = WitnessSpec::new(1.0).unwrap();
        assert!((mdi_score_analytic(&GaussianState::vacuum(2), &one).unwrap() - 1.0).abs() < 1e-15);
        for r in [0.1, 0.5, 1.3] {
            let v = mdi_score_analytic(&GaussianState::tmsv(r).unwrap(), &one).unwrap();
            assert!((v - 0.5 * (1.0 + (-2.0 * r).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn noisy_closed_form_limits() {
        for r in [0.0, 0.4, 1.7] {
            let clean = noisy_tmsv_ew(&NoiseParams::new(0.0, 0.0, r).unwrap(), 1.0).unwrap();
            assert!((clean - (-2.0 * r).exp()).abs() < 1e-14);
            for k in [0.5, 1.0, 3.0] {
                let dark = noisy_tmsv_ew(&NoiseParams::new(1.0, 1.0, r).unwrap(), k).unwrap();
                assert!((dark - separable_bound_ew(k).unwrap()).abs() < 1e-13);
            }
        }
        assert!(NoiseParams::new(1.2, 0.0, 0.1).is_err());
    }

    #[test]
    fn optimal_kappa_examples() {
        assert_eq!(optimal_kappa(0.3, 0.3).unwrap(), 1.0);
        assert!((optimal_kappa(0.0, 0.75).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(optimal_kappa(1.0, 0.2), Err(Error::NoBalancingKappa(_))));
        assert!(matches!(optimal_kappa(0.2, 1.0), Err(Error::NoBalancingKappa(_))));
    }

    #[test]
    fn minimal_sigma_for_tmsv() {
        let one = WitnessSpec::new(1.0).unwrap();
        let s = minimal_certifying_sigma(&GaussianState::tmsv(0.5).unwrap(), &one)
            .unwrap()
            .unwrap();
        let v = 0.5 * (1.0 + (-1f64).exp());
        assert!((mdi_bound(1.0, s).unwrap() - v).abs() < 1e-14);
        assert!(minimal_certifying_sigma(&GaussianState::vacuum(2), &one).unwrap().is_none());
    }

    #[test]
    fn boundary_limits() {
        assert!((certification_eta_limit(3.0).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(certification_eta_limit(1.0).unwrap(), 0.0);
        assert!(boundary_r_star(0.9, 0.9).unwrap().is_infinite());
        let table = contour_scan(&[0.0, 1.0], &[0.0, 0.5], &[]).unwrap();
        assert_eq!(table.values.len(), 4);
        assert!(table.boundaries.is_empty());
        assert_eq!(table.values[1].r, 0.0);
        assert_eq!(table.values[1].eta, 0.5);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let t = golden_section(|x| (x - 0.3).powi(2), -3.0, 3.0, 1e-10);
        assert!((t - 0.3).abs() < 1e-9);
    }

    #[test]
    fn optimizer_on_tmsv() {
        let opt = optimize_witness(&GaussianState::tmsv(0.7).unwrap(), LOG_KAPPA_RANGE).unwrap();
        assert!((opt.spec.kappa - 1.0).abs() < 1e-6);
        assert!((opt.ew - (-1.4f64).exp()).abs() < 1e-9);
        assert!(!opt.used_standard_form);
        let (a, b) = opt.spec.orientation();
        assert!((a - Matrix2::identity()).norm() < 1e-6);
        assert!((b - Matrix2::identity()).norm() < 1e-6);
    }
}
