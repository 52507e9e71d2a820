//! Monte Carlo rounds of the measurement-device-independent protocol.
//!
//! Each round draws coherent amplitudes `α, β` from a prior, mixes `|α⟩`
//! with mode A and `|β⟩` with mode B on balanced beam splitters, and
//! homodynes `x` on the sum ports and `p` on the difference ports. The four
//! measured quadratures live on distinct modes and commute, so their joint
//! law is an exact 4-variate Gaussian that is sampled directly.
//!
//! Mode layout of the four-mode state is `[α, A, B, β]`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{BeamSplitterConvention, GaussianState, SymplecticMap};
use crate::quadrature::integrate_piecewise;

pub use crate::priors::PriorSpec;

/// Knots in the tabulated inverse CDF of the smooth-box prior.
pub const INVERSE_CDF_KNOTS: usize = 1 << 14;

/// CSV header of a sample dump.
pub const SAMPLE_CSV_HEADER: &str = "trial,alpha_x,alpha_p,beta_x,beta_p,a1,a2,b1,b2";

// Quadrature indices of (Â₁, Â₂, B̂₁, B̂₂) in the four-mode state.
const OUTCOME_INDICES: [usize; 4] = [0, 3, 6, 5];

/// Deterministic random stream keyed by `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One protocol round: the drawn amplitudes and the offset outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdiSample {
    pub alpha_x: f64,
    pub alpha_p: f64,
    pub beta_x: f64,
    pub beta_p: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl MdiSample {
    /// `(U_κ, V_κ)` with
    /// `U_κ = κa₁ − b₁/κ − (κα_x − β_x/κ)/√2` and
    /// `V_κ = κa₂ + b₂/κ − (κα_p + β_p/κ)/√2`.
    pub fn uv(&self, kappa: f64) -> (f64, f64) {
        let u = kappa * self.a1 - self.b1 / kappa
            - (kappa * self.alpha_x - self.beta_x / kappa) * FRAC_1_SQRT_2;
        let v = kappa * self.a2 + self.b2 / kappa
            - (kappa * self.alpha_p + self.beta_p / kappa) * FRAC_1_SQRT_2;
        (u, v)
    }

    /// `U_κ² + V_κ²`.
    pub fn mdiew(&self, kappa: f64) -> f64 {
        let (u, v) = self.uv(kappa);
        u * u + v * v
    }

    pub fn fields(&self) -> [f64; 8] {
        [
            self.alpha_x,
            self.alpha_p,
            self.beta_x,
            self.beta_p,
            self.a1,
            self.a2,
            self.b1,
            self.b2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeVariant {
    /// Beam splitters with the inputs followed by homodyne detection.
    PaperOptimal,
    /// Each side heterodynes its own coherent input and ignores `ρ_AB`.
    SeparableHeterodyne,
}

/// Measurement description: known state means and the strategy used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementScheme {
    /// `(⟨x_A⟩, ⟨p_A⟩, ⟨x_B⟩, ⟨p_B⟩)`.
    pub offsets: [f64; 4],
    pub variant: SchemeVariant,
}

impl Default for MeasurementScheme {
    fn default() -> Self {
        Self {
            offsets: [0.0; 4],
            variant: SchemeVariant::PaperOptimal,
        }
    }
}

impl MeasurementScheme {
    pub fn new(offsets: [f64; 4], variant: SchemeVariant) -> Result<Self> {
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(invalid("offsets", "offsets must be finite"));
        }
        Ok(Self { offsets, variant })
    }

    /// Homodyne scheme with offsets set to the known means of `rho_ab`.
    pub fn with_known_means(rho_ab: &GaussianState) -> Result<Self> {
        check_two_modes(rho_ab)?;
        let m = rho_ab.mean();
        Self::new([m[0], m[1], m[2], m[3]], SchemeVariant::PaperOptimal)
    }

    pub fn separable_heterodyne() -> Self {
        Self {
            offsets: [0.0; 4],
            variant: SchemeVariant::SeparableHeterodyne,
        }
    }

    /// Shifts that turn raw port readings into `(a₁, a₂, b₁, b₂)`.
    fn shifts(&self) -> Vector4<f64> {
        let [xa, pa, xb, pb] = self.offsets;
        Vector4::new(-xa, pa, -xb, pb) * FRAC_1_SQRT_2
    }
}

fn check_two_modes(rho_ab: &GaussianState) -> Result<()> {
    if rho_ab.n_modes() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "ρ_AB must have 2 modes, got {}",
            rho_ab.n_modes()
        )));
    }
    Ok(())
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Prepared sampler for one prior; reuse it across draws.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    spec: PriorSpec,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Normal { std: f64 },
    Table(Vec<f64>),
}

impl PriorSampler {
    pub fn new(spec: &PriorSpec) -> Result<Self> {
        spec.validate()?;
        let kind = match *spec {
            PriorSpec::Gaussian { sigma } => SamplerKind::Normal {
                std: sigma * FRAC_1_SQRT_2,
            },
            PriorSpec::SmoothBox { .. } => SamplerKind::Table(inverse_cdf_table(spec)),
        };
        Ok(Self { spec: *spec, kind })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn draw_component<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Normal { std } => std * standard_normal(rng),
            SamplerKind::Table(table) => {
                let pos = rng.random::<f64>() * (table.len() - 1) as f64;
                let k = (pos as usize).min(table.len() - 2);
                let t = pos - k as f64;
                table[k] + t * (table[k + 1] - table[k])
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let x = self.draw_component(rng);
        let p = self.draw_component(rng);
        (x, p)
    }

    /// Posterior mean of one amplitude component given the heterodyne
    /// estimate `h = α + N(0, ½)`.
    pub fn posterior_mean(&self, h: f64) -> f64 {
        match self.spec {
            PriorSpec::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                h * s2 / (1.0 + s2)
            }
            PriorSpec::SmoothBox { .. } => {
                let mut breaks = self.spec.breakpoints();
                let (lo, hi) = self.spec.support();
                let nearest = h.clamp(lo, hi);
                if !breaks.contains(&nearest) {
                    breaks.push(nearest);
                    breaks.sort_by(f64::total_cmp);
                }
                let shift = (h - nearest).powi(2);
                let weight = |a: f64| self.spec.density(a) * (shift - (h - a).powi(2)).exp();
                let den = integrate_piecewise(weight, &breaks, 1e-13);
                let num = integrate_piecewise(|a| a * weight(a), &breaks, 1e-13);
                num / den
            }
        }
    }
}

fn inverse_cdf_table(spec: &PriorSpec) -> Vec<f64> {
    let (lo, hi) = spec.support();
    let last = INVERSE_CDF_KNOTS - 1;
    (0..INVERSE_CDF_KNOTS)
        .map(|k| {
            if k == 0 {
                return lo;
            }
            if k == last {
                return hi;
            }
            let target = k as f64 / last as f64;
            let (mut a, mut b) = (lo, hi);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if spec.cdf(mid) < target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Draws `(α_x, α_p)` from `prior`.
///
/// Builds a fresh [`PriorSampler`] on each call; hold one for repeated draws.
pub fn draw_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Result<(f64, f64)> {
    Ok(PriorSampler::new(prior)?.draw(rng))
}

/// Four-mode state `|α⟩ ⊗ ρ_AB ⊗ |β⟩` after both beam splitters.
pub fn protocol_state(
    rho_ab: &GaussianState,
    alpha: (f64, f64),
    beta: (f64, f64),
) -> Result<GaussianState> {
    check_two_modes(rho_ab)?;
    let joint = GaussianState::coherent(alpha.0, alpha.1)?
        .tensor(rho_ab)
        .tensor(&GaussianState::coherent(beta.0, beta.1)?);
    joint
        .beam_splitter(0, 1, BeamSplitterConvention::SumDifference)?
        .beam_splitter(3, 2, BeamSplitterConvention::SumDifference)
}

/// Exact mean and covariance of the raw readings `(Â₁, Â₂, B̂₁, B̂₂)`.
pub fn joint_outcome_distribution(
    rho_ab: &GaussianState,
    alpha: (f64, f64),
    beta: (f64, f64),
) -> Result<(Vector4<f64>, Matrix4<f64>)> {
    let out = protocol_state(rho_ab, alpha, beta)?;
    let mean = Vector4::from_fn(|i, _| out.mean()[OUTCOME_INDICES[i]]);
    let cov = Matrix4::from_fn(|i, j| out.cov()[(OUTCOME_INDICES[i], OUTCOME_INDICES[j])]);
    Ok((mean, cov))
}

/// Outcome law of the homodyne scheme for a fixed `ρ_AB`, affine in `(α, β)`.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    base_mean: Vector4<f64>,
    gain: Matrix4<f64>,
    root: Matrix4<f64>,
    cov: Matrix4<f64>,
    shifts: Vector4<f64>,
}

impl OutcomeModel {
    pub fn new(rho_ab: &GaussianState, scheme: &MeasurementScheme) -> Result<Self> {
        check_two_modes(rho_ab)?;
        let network = SymplecticMap::beam_splitter(4, 0, 1, BeamSplitterConvention::SumDifference)?
            .then(&SymplecticMap::beam_splitter(
                4,
                3,
                2,
                BeamSplitterConvention::SumDifference,
            )?)?;
        let s = network.matrix();
        let rows = DMatrix::from_fn(4, 8, |i, j| s[(OUTCOME_INDICES[i], j)]);
        let input = GaussianState::vacuum(1)
            .tensor(rho_ab)
            .tensor(&GaussianState::vacuum(1));
        let base_mean: DVector<f64> = &rows * input.mean();
        let cov: DMatrix<f64> = &rows * input.cov() * rows.transpose();
        let amplitude_columns = [0usize, 1, 6, 7];
        let gain = Matrix4::from_fn(|i, j| rows[(i, amplitude_columns[j])]);
        let cov = Matrix4::from_fn(|i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
        let eig = SymmetricEigen::new(cov);
        if eig.eigenvalues.min() < 0.0 {
            return Err(Error::Numerical(format!(
                "outcome covariance is not positive semidefinite (min eigenvalue {:e})",
                eig.eigenvalues.min()
            )));
        }
        let roots = eig.eigenvalues.map(f64::sqrt);
        let root = eig.eigenvectors * Matrix4::from_diagonal(&roots) * eig.eigenvectors.transpose();
        Ok(Self {
            base_mean: Vector4::from_fn(|i, _| base_mean[i]),
            gain,
            root,
            cov,
            shifts: scheme.shifts(),
        })
    }

    /// Mean of the offset outcomes `(a₁, a₂, b₁, b₂)` at given amplitudes.
    pub fn mean(&self, alpha: (f64, f64), beta: (f64, f64)) -> Vector4<f64> {
        self.base_mean + self.gain * Vector4::new(alpha.0, alpha.1, beta.0, beta.1) + self.shifts
    }

    pub fn covariance(&self) -> &Matrix4<f64> {
        &self.cov
    }

    pub fn sample_given<R: Rng + ?Sized>(
        &self,
        alpha: (f64, f64),
        beta: (f64, f64),
        rng: &mut R,
    ) -> MdiSample {
        let z = Vector4::from_fn(|_, _| standard_normal(rng));
        let out = self.mean(alpha, beta) + self.root * z;
        MdiSample {
            alpha_x: alpha.0,
            alpha_p: alpha.1,
            beta_x: beta.0,
            beta_p: beta.1,
            a1: out[0],
            a2: out[1],
            b1: out[2],
            b2: out[3],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, prior: &PriorSampler, rng: &mut R) -> MdiSample {
        let alpha = prior.draw(rng);
        let beta = prior.draw(rng);
        self.sample_given(alpha, beta, rng)
    }
}

/// One round of the scheme on `rho_ab`.
pub fn mdi_round<R: Rng + ?Sized>(
    rho_ab: &GaussianState,
    prior: &PriorSpec,
    scheme: &MeasurementScheme,
    rng: &mut R,
) -> Result<MdiSample> {
    check_two_modes(rho_ab)?;
    let sampler = PriorSampler::new(prior)?;
    let sample = match scheme.variant {
        SchemeVariant::PaperOptimal => OutcomeModel::new(rho_ab, scheme)?.sample(&sampler, rng),
        SchemeVariant::SeparableHeterodyne => heterodyne_round(&sampler, rng),
    };
    finite_or_error(sample)
}

fn finite_or_error(sample: MdiSample) -> Result<MdiSample> {
    if sample.is_finite() {
        Ok(sample)
    } else {
        Err(Error::Numerical(format!("non-finite outcome {sample:?}")))
    }
}

/// Best product strategy: heterodyne each coherent input and report the
/// posterior-mean estimates scaled into the outcome slots.
pub fn separable_adversary_round<R: Rng + ?Sized>(
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<MdiSample> {
    Ok(heterodyne_round(&PriorSampler::new(prior)?, rng))
}

fn heterodyne_round<R: Rng + ?Sized>(prior: &PriorSampler, rng: &mut R) -> MdiSample {
    let alpha = prior.draw(rng);
    let beta = prior.draw(rng);
    // Mixing |α⟩ with vacuum and homodyning both ports reads each quadrature
    // with variance ¼; rescaling by √2 gives h = α + N(0, ½).
    let mut estimate = |a: f64| {
        let port = a * FRAC_1_SQRT_2 + 0.5 * standard_normal(rng);
        prior.posterior_mean(SQRT_2 * port)
    };
    let ax = estimate(alpha.0);
    let ap = estimate(alpha.1);
    let bx = estimate(beta.0);
    let bp = estimate(beta.1);
    MdiSample {
        alpha_x: alpha.0,
        alpha_p: alpha.1,
        beta_x: beta.0,
        beta_p: beta.1,
        a1: ax * FRAC_1_SQRT_2,
        a2: ap * FRAC_1_SQRT_2,
        b1: bx * FRAC_1_SQRT_2,
        b2: bp * FRAC_1_SQRT_2,
    }
}

/// Mean and jackknife standard error of `values`.
///
/// Fewer than two values give an infinite standard error.
pub fn jackknife_mean(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Empty("values"));
    }
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n < 2 {
        return Ok((mean, f64::INFINITY));
    }
    let m = (n - 1) as f64;
    let spread: f64 = values
        .iter()
        .map(|v| {
            let leave_out = (total - v) / m;
            (leave_out - mean).powi(2)
        })
        .sum();
    Ok((mean, (spread * m / n as f64).sqrt()))
}

/// Run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub trials: usize,
    pub seed: u64,
    /// κ values for which `(U_κ, V_κ)` moments are summarized.
    pub kappas: Vec<f64>,
}

/// Second moments of `(U_κ, V_κ)` at one κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaMoments {
    pub kappa: f64,
    pub mean_u2: f64,
    pub mean_v2: f64,
    pub mean_uv: f64,
    pub score: f64,
    #[serde(with = "crate::witness::infinite_as_null")]
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    /// Means of `alpha_x, alpha_p, beta_x, beta_p, a1, a2, b1, b2`.
    pub slot_means: [f64; 8],
    pub moments: Vec<KappaMoments>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Vec<MdiSample>,
    pub summary: BatchSummary,
}

/// Runs `config.trials` independent rounds; trial `i` uses stream `i` of
/// `config.seed`, so results do not depend on thread scheduling.
pub fn run_batch(
    config: &BatchConfig,
    rho_ab: &GaussianState,
    prior: &PriorSpec,
    scheme: &MeasurementScheme,
) -> Result<Batch> {
    if config.trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    for &k in &config.kappas {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid("kappa", format!("κ must be positive, got {k}")));
        }
    }
    check_two_modes(rho_ab)?;
    let sampler = PriorSampler::new(prior)?;
    let model = match scheme.variant {
        SchemeVariant::PaperOptimal => Some(OutcomeModel::new(rho_ab, scheme)?),
        SchemeVariant::SeparableHeterodyne => None,
    };
    let samples = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::new(config.seed, trial as u64).rng();
            let sample = match &model {
                Some(model) => model.sample(&sampler, &mut rng),
                None => heterodyne_round(&sampler, &mut rng),
            };
            finite_or_error(sample)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&samples, &config.kappas)?;
    Ok(Batch { samples, summary })
}

pub fn summarize(samples: &[MdiSample], kappas: &[f64]) -> Result<BatchSummary> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let n = samples.len() as f64;
    let mut slot_means = [0.0; 8];
    for s in samples {
        for (acc, v) in slot_means.iter_mut().zip(s.fields()) {
            *acc += v;
        }
    }
    slot_means.iter_mut().for_each(|v| *v /= n);
    let moments = kappas
        .iter()
        .map(|&kappa| {
            let (mut u2, mut v2, mut uv) = (0.0, 0.0, 0.0);
            let scores: Vec<f64> = samples
                .iter()
                .map(|s| {
                    let (u, v) = s.uv(kappa);
                    u2 += u * u;
                    v2 += v * v;
                    uv += u * v;
                    u * u + v * v
                })
                .collect();
            let (score, std_error) = jackknife_mean(&scores)?;
            Ok(KappaMoments {
                kappa,
                mean_u2: u2 / n,
                mean_v2: v2 / n,
                mean_uv: uv / n,
                score,
                std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchSummary {
        count: samples.len(),
        slot_means,
        moments,
    })
}

pub fn samples_to_csv(samples: &[MdiSample]) -> String {
    let mut out = String::with_capacity(64 + samples.len() * 200);
    out.push_str(SAMPLE_CSV_HEADER);
    out.push('\n');
    for (trial, s) in samples.iter().enumerate() {
        write!(out, "{trial}").expect("writing to a String");
        for v in s.fields() {
            write!(out, ",{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn samples_from_csv(text: &str) -> Result<Vec<MdiSample>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SAMPLE_CSV_HEADER => {}
        other => {
            return Err(invalid(
                "csv",
                format!("expected header `{SAMPLE_CSV_HEADER}`, got {other:?}"),
            ))
        }
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(row, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(invalid("csv", format!("row {row}: expected 9 columns")));
            }
            let mut v = [0.0; 8];
            for (slot, text) in v.iter_mut().zip(&cols[1..]) {
                *slot = text
                    .trim()
                    .parse()
                    .map_err(|e| invalid("csv", format!("row {row}: {e}")))?;
            }
            Ok(MdiSample {
                alpha_x: v[0],
                alpha_p: v[1],
                beta_x: v[2],
                beta_p: v[3],
                a1: v[4],
                a2: v[5],
                b1: v[6],
                b2: v[7],
            })
        })
        .collect()
}

pub fn write_samples_csv(path: &Path, samples: &[MdiSample]) -> Result<()> {
    std::fs::write(path, samples_to_csv(samples))?;
    Ok(())
}
