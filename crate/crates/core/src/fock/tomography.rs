use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::states::CoherentProbe;
use super::FockOperator;
use crate::error::{invalid, Error, Result};

/// Relative ridge weight applied to the largest singular value.
const RIDGE_WEIGHT: f64 = 1e-10;

/// Largest acceptable condition number of the design matrix.
const MAX_CONDITION: f64 = 1e12;

pub const TOMOGRAPHY_CSV_HEADER: &str = "alpha_re,alpha_im,beta_re,beta_im,p11";

/// One probe setting and its observed double-success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyRow {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub p11: f64,
}

/// Probe settings with observed probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyGrid {
    pub rows: Vec<TomographyRow>,
    /// Ridge weight relative to the largest singular value of the design.
    pub regularization: f64,
}

impl TomographyGrid {
    pub fn new(rows: Vec<TomographyRow>) -> Result<Self> {
        for (k, row) in rows.iter().enumerate() {
            if !(-1e-12..=1.0 + 1e-12).contains(&row.p11) {
                return Err(invalid("p11", format!("row {k}: probability {} outside [0, 1]", row.p11)));
            }
        }
        Ok(Self {
            rows,
            regularization: RIDGE_WEIGHT,
        })
    }

    /// Noiseless probabilities `⟨α,β|M|α,β⟩` for every pair drawn from
    /// `alphas × betas`, with probes truncated at the cutoffs of `m`.
    pub fn simulate(m: &FockOperator, alphas: &[Complex64], betas: &[Complex64]) -> Result<Self> {
        check_two_modes(m)?;
        let mut rows = Vec::with_capacity(alphas.len() * betas.len());
        for &a in alphas {
            for &b in betas {
                let gamma = probe_pair(a, b, m.cutoffs())?;
                rows.push(TomographyRow {
                    alpha: [a.re, a.im],
                    beta: [b.re, b.im],
                    p11: m.expectation(&gamma)?.re,
                });
            }
        }
        Self::new(rows)
    }

    /// Square amplitude grid `x + ip` with `x, p ∈ linspace(−h, h, n)`.
    pub fn square_amplitudes(half_width: f64, n: usize) -> Vec<Complex64> {
        let axis = crate::witness::linspace(-half_width, half_width, n);
        axis.iter()
            .flat_map(|&x| axis.iter().map(move |&p| Complex64::new(x, p)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TOMOGRAPHY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.alpha[0], r.alpha[1], r.beta[0], r.beta[1], r.p11
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TOMOGRAPHY_CSV_HEADER => {}
            other => {
                return Err(invalid(
                    "csv",
                    format!("expected header `{TOMOGRAPHY_CSV_HEADER}`, got {other:?}"),
                ))
            }
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, line)| {
                let v: Vec<f64> = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| invalid("csv", format!("row {k}: {e}")))?;
                if v.len() != 5 {
                    return Err(invalid("csv", format!("row {k}: expected 5 columns")));
                }
                Ok(TomographyRow {
                    alpha: [v[0], v[1]],
                    beta: [v[2], v[3]],
                    p11: v[4],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }
}

fn check_two_modes(m: &FockOperator) -> Result<()> {
    if m.n_modes() == 2 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "tomography works on two-mode operators, got {} modes",
            m.n_modes()
        )))
    }
}

// The operator is assumed to live on the truncated space, so the raw
// truncated probe amplitudes give exact probabilities.
fn probe_pair(a: Complex64, b: Complex64, cutoffs: &[usize]) -> Result<DVector<Complex64>> {
    let va = CoherentProbe::unchecked(a, cutoffs[0])?.vector();
    let vb = CoherentProbe::unchecked(b, cutoffs[1])?.vector();
    Ok(va.kronecker(&vb))
}

/// Estimated POVM element with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub operator: FockOperator,
    pub condition_number: f64,
    /// `‖A m̂ − p‖₂`.
    pub residual_norm: f64,
    pub unknowns: usize,
}

/// Ridge-regularized least-squares estimate of a Hermitian `M` on cutoff
/// `d` per mode from `P(1,1|α,β) = ⟨α,β|M|α,β⟩`.
///
/// `M` is parametrized by its `D²` real coordinates in the Hermitian basis
/// (`D = d²`), so the estimate is Hermitian by construction.
pub fn reconstruct_povm(grid: &TomographyGrid, cutoff: usize) -> Result<Reconstruction> {
    let cutoffs = [cutoff, cutoff];
    let dim = cutoff * cutoff;
    let unknowns = dim * dim;
    let rows = grid.rows.len();
    if rows < unknowns {
        return Err(Error::Underdetermined { rows, unknowns });
    }
    let mut design = DMatrix::<f64>::zeros(rows, unknowns);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (k, row) in grid.rows.iter().enumerate() {
        let gamma = probe_pair(
            Complex64::new(row.alpha[0], row.alpha[1]),
            Complex64::new(row.beta[0], row.beta[1]),
            &cutoffs,
        )?;
        let mut col = 0;
        for i in 0..dim {
            design[(k, col)] = gamma[i].norm_sqr();
            col += 1;
            for j in (i + 1)..dim {
                let z = gamma[i].conj() * gamma[j];
                design[(k, col)] = 2.0 * z.re;
                design[(k, col + 1)] = -2.0 * z.im;
                col += 2;
            }
        }
        rhs[k] = row.p11;
    }
    let svd = design.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let condition_number = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition_number <= MAX_CONDITION) {
        return Err(Error::IllConditioned(condition_number));
    }
    let mu = grid.regularization * s_max;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let proj = u.transpose() * &rhs;
    let scaled = DVector::from_fn(s.len(), |i, _| proj[i] * s[i] / (s[i] * s[i] + mu * mu));
    let x = vt.transpose() * scaled;
    let residual_norm = (&design * &x - &rhs).norm();

    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut col = 0;
    for i in 0..dim {
        m[(i, i)] = Complex64::new(x[col], 0.0);
        col += 1;
        for j in (i + 1)..dim {
            let v = Complex64::new(x[col], x[col + 1]);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
            col += 2;
        }
    }
    Ok(Reconstruction {
        operator: FockOperator::new(cutoffs.to_vec(), m)?,
        condition_number,
        residual_norm,
        unknowns,
    })
}
