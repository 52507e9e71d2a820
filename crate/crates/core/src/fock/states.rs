use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{c, FockOperator};
use crate::error::{ensure_finite, invalid, Error, Result};

/// Largest acceptable truncated-norm deficit of a coherent probe.
pub const PROBE_DEFICIT_TOLERANCE: f64 = 1e-10;

/// Coherent state `|α⟩` truncated to `cutoff` levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentProbe {
    pub alpha: Complex64,
    pub cutoff: usize,
}

impl CoherentProbe {
    /// Fails with [`Error::CutoffInadequate`] when the truncated norm falls
    /// short of one by more than [`PROBE_DEFICIT_TOLERANCE`].
    pub fn new(alpha: Complex64, cutoff: usize) -> Result<Self> {
        let probe = Self::unchecked(alpha, cutoff)?;
        let deficit = probe.deficit();
        if deficit > PROBE_DEFICIT_TOLERANCE {
            return Err(Error::CutoffInadequate {
                amplitude: alpha.norm(),
                cutoff,
                deficit,
            });
        }
        Ok(probe)
    }

    /// Probe without the adequacy check, for operators known to live on the
    /// truncated space.
    pub fn unchecked(alpha: Complex64, cutoff: usize) -> Result<Self> {
        ensure_finite("alpha", alpha.re)?;
        ensure_finite("alpha", alpha.im)?;
        if cutoff == 0 {
            return Err(invalid("cutoff", "cutoff must be at least 1"));
        }
        Ok(Self { alpha, cutoff })
    }

    /// `1 − Σ_{k<d} e^{−|α|²}|α|^{2k}/k!`, summed as the tail for accuracy.
    pub fn deficit(&self) -> f64 {
        let x = self.alpha.norm_sqr();
        if x == 0.0 {
            return 0.0;
        }
        let mut log_term = -x;
        for k in 1..=self.cutoff {
            log_term += x.ln() - (k as f64).ln();
        }
        let mut term = log_term.exp();
        let mut tail = 0.0;
        let mut k = self.cutoff;
        while term > 1e-300 && (tail == 0.0 || term > 1e-18 * tail) {
            tail += term;
            k += 1;
            term *= x / k as f64;
        }
        tail
    }

    /// Amplitudes `e^{−|α|²/2} αⁿ/√n!` for `n < cutoff`, not renormalized.
    pub fn vector(&self) -> DVector<Complex64> {
        let mut v = DVector::zeros(self.cutoff);
        let mut amp = c((-0.5 * self.alpha.norm_sqr()).exp());
        for n in 0..self.cutoff {
            v[n] = amp;
            amp = amp * self.alpha / (n as f64 + 1.0).sqrt();
        }
        v
    }
}

/// Truncated two-mode squeezed vacuum.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTmsv {
    /// State on cutoffs `[d, d]`.
    pub vector: DVector<Complex64>,
    /// Schmidt coefficients `c_i`, renormalized.
    pub coefficients: Vec<f64>,
    /// Norm lost to truncation before renormalization: `λ^{2d}`.
    pub deficit: f64,
    pub cutoff: usize,
}

impl TruncatedTmsv {
    /// Coefficients as a `d × d` matrix `φ_{ij} = ⟨i j|φ⟩`.
    pub fn amplitude_matrix(&self) -> DMatrix<Complex64> {
        let d = self.cutoff;
        DMatrix::from_fn(d, d, |i, j| self.vector[i * d + j])
    }

    pub fn projector(&self) -> FockOperator {
        FockOperator::projector(vec![self.cutoff, self.cutoff], &self.vector).expect("consistent dims")
    }
}

/// `√(1−λ²) Σ λ^i |ii⟩` with `λ = tanh r`, truncated to `i < cutoff` and
/// renormalized.
pub fn tmsv_vector(r: f64, cutoff: usize) -> Result<TruncatedTmsv> {
    ensure_finite("r", r)?;
    if cutoff < 1 {
        return Err(invalid("cutoff", "cutoff must be at least 1"));
    }
    let lambda = r.tanh();
    let raw: Vec<f64> = (0..cutoff)
        .map(|i| (1.0 - lambda * lambda).sqrt() * lambda.powi(i as i32))
        .collect();
    let kept: f64 = raw.iter().map(|v| v * v).sum();
    let norm = kept.sqrt();
    let coefficients: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    let mut vector = DVector::zeros(cutoff * cutoff);
    for (i, &ci) in coefficients.iter().enumerate() {
        vector[i * cutoff + i] = c(ci);
    }
    Ok(TruncatedTmsv {
        vector,
        coefficients,
        deficit: lambda.abs().powi(2 * cutoff as i32),
        cutoff,
    })
}

/// Truncated annihilation operator on `cutoff` levels.
pub fn annihilation(cutoff: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(cutoff, cutoff, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

/// `exp(G) v` for a real generator, by Taylor series with scaling.
fn expm_apply(g: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let norm = g.abs().row_sum().max();
    let steps = norm.ceil().max(1.0) as usize;
    let h = g / steps as f64;
    let mut out = v.clone();
    for _ in 0..steps {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..60 {
            term = &h * term / k as f64;
            acc += &term;
            if term.norm() <= 1e-18 * acc.norm() {
                break;
            }
        }
        out = acc;
    }
    out
}

fn real_annihilation(cutoff: usize) -> DMatrix<f64> {
    DMatrix::from_fn(cutoff, cutoff, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

/// Applies `exp(r/2 (a†² − a²))` on `mode` of a real state vector.
pub fn squeeze_unitary_apply(v: &DVector<f64>, cutoffs: &[usize], mode: usize, r: f64) -> Result<DVector<f64>> {
    check_vector(v, cutoffs)?;
    if mode >= cutoffs.len() {
        return Err(Error::ModeOutOfRange {
            index: mode,
            n_modes: cutoffs.len(),
        });
    }
    let a = real_annihilation(cutoffs[mode]);
    let a2 = &a * &a;
    let local = (a2.transpose() - a2) * (0.5 * r);
    Ok(expm_apply(&embed_local(&local, cutoffs, mode), v))
}

/// Applies `exp(θ(a_i† a_j − a_j† a_i))` on a real state vector.
pub fn beam_splitter_unitary_apply(
    v: &DVector<f64>,
    cutoffs: &[usize],
    mode_i: usize,
    mode_j: usize,
    theta: f64,
) -> Result<DVector<f64>> {
    check_vector(v, cutoffs)?;
    let n = cutoffs.len();
    for m in [mode_i, mode_j] {
        if m >= n {
            return Err(Error::ModeOutOfRange { index: m, n_modes: n });
        }
    }
    if mode_i == mode_j {
        return Err(invalid("mode_j", "beam splitter needs two distinct modes"));
    }
    let ai = embed_local(&real_annihilation(cutoffs[mode_i]), cutoffs, mode_i);
    let aj = embed_local(&real_annihilation(cutoffs[mode_j]), cutoffs, mode_j);
    let hop = ai.transpose() * &aj;
    let g = (&hop - hop.transpose()) * theta;
    Ok(expm_apply(&g, v))
}

fn check_vector(v: &DVector<f64>, cutoffs: &[usize]) -> Result<()> {
    let dim: usize = cutoffs.iter().product();
    if v.len() == dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "vector of length {} for cutoffs {cutoffs:?}",
            v.len()
        )))
    }
}

fn embed_local(local: &DMatrix<f64>, cutoffs: &[usize], mode: usize) -> DMatrix<f64> {
    let before: usize = cutoffs[..mode].iter().product();
    let after: usize = cutoffs[mode + 1..].iter().product();
    DMatrix::<f64>::identity(before, before)
        .kronecker(local)
        .kronecker(&DMatrix::<f64>::identity(after, after))
}

/// `B₁₂ S₁(r) S₂(−r)|00⟩` built from matrix exponentials at
/// `working_cutoff`, restricted to `cutoff` levels per mode.
pub fn tmsv_from_squeezers(r: f64, cutoff: usize, working_cutoff: usize) -> Result<DVector<Complex64>> {
    if working_cutoff < cutoff {
        return Err(invalid("working_cutoff", "must be at least the output cutoff"));
    }
    let w = [working_cutoff, working_cutoff];
    let mut v = DVector::zeros(working_cutoff * working_cutoff);
    v[0] = 1.0;
    let v = squeeze_unitary_apply(&v, &w, 0, r)?;
    let v = squeeze_unitary_apply(&v, &w, 1, -r)?;
    let v = beam_splitter_unitary_apply(&v, &w, 0, 1, -std::f64::consts::FRAC_PI_4)?;
    Ok(DVector::from_fn(cutoff * cutoff, |k, _| {
        let (i, j) = (k / cutoff, k % cutoff);
        c(v[i * working_cutoff + j])
    }))
}
