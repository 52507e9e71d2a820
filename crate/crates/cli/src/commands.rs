use std::path::{Path, PathBuf};

use cvmdi_core::priors::{fim, fim_numerical, separable_mdi_bound, FisherMatrix, PriorSpec, SeparableBound};
use cvmdi_core::sampler::{run_batch, samples_to_csv, BatchConfig, BatchSummary, MeasurementScheme};
use cvmdi_core::witness::{
    contour_scan, duan_ew, linspace, mdi_bound, mdi_score_analytic, mdi_score_from_samples, mdi_score_with_prior,
    minimal_certifying_sigma, optimal_kappa, optimize_witness, separable_bound_ew, NoiseParams, ScoreReport,
    WitnessSpec, LOG_KAPPA_RANGE,
};
use cvmdi_core::GaussianState;
use serde::Serialize;

use crate::config::{pick, require, CommonArgs, FileConfig, Format, KappaChoice};
use crate::output::{emit, key_value_csv, num, sibling, to_json, write_atomic};
use crate::{CliError, ContourArgs, PriorArgs, SimulateArgs, WitnessEvalArgs};

/// Maps errors raised while checking inputs to exit code 2.
pub fn cfg<T>(r: cvmdi_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(e.to_string()))
}

fn json_or_csv<T: Serialize>(format: Format, value: &T, rows: &[(&str, String)]) -> Result<String, CliError> {
    match format {
        Format::Json => to_json(value),
        Format::Csv => Ok(key_value_csv(rows)),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Source {
    LossyTmsv { r: f64, eta_a: f64, eta_b: f64 },
    File { path: PathBuf },
}

struct ResolvedSource {
    source: Source,
    state: GaussianState,
    noise: Option<NoiseParams>,
}

fn resolve_source(c: &CommonArgs, f: &FileConfig, state: Option<&Path>) -> Result<ResolvedSource, CliError> {
    if let Some(path) = state {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read state {}: {e}", path.display())))?;
        let state = cfg(GaussianState::from_json(&text))?;
        require(state.n_modes() == 2, "the state file must describe two modes")?;
        return Ok(ResolvedSource {
            source: Source::File { path: path.to_path_buf() },
            state,
            noise: None,
        });
    }
    let r = pick(c.r, f.r, 0.5);
    let eta_a = pick(c.eta_a, f.eta_a, 0.0);
    let eta_b = pick(c.eta_b, f.eta_b, 0.0);
    let noise = cfg(NoiseParams::new(eta_a, eta_b, r))?;
    Ok(ResolvedSource {
        source: Source::LossyTmsv { r, eta_a, eta_b },
        state: noise.state()?,
        noise: Some(noise),
    })
}

fn check_sigma(sigma: f64) -> Result<(), CliError> {
    require(sigma > 0.0, format!("σ must be positive, got {sigma}"))
}

#[derive(Debug, Serialize)]
struct WitnessEvalReport {
    source: Source,
    kappa: f64,
    orientation_a: [[f64; 2]; 2],
    orientation_b: [[f64; 2]; 2],
    ew: f64,
    separable_bound: f64,
    #[serde(with = "cvmdi_core::witness::infinite_as_null")]
    minimal_certifying_sigma: f64,
    report: ScoreReport,
}

pub fn witness_eval(c: &CommonArgs, f: &FileConfig, a: &WitnessEvalArgs) -> Result<(), CliError> {
    let state_path = a.state.clone().or_else(|| f.state.clone());
    let src = resolve_source(c, f, state_path.as_deref())?;
    let sigma = pick(c.sigma, f.sigma, f64::INFINITY);
    check_sigma(sigma)?;
    let spec = match pick(c.kappa, f.kappa, KappaChoice::Value(1.0)) {
        KappaChoice::Value(k) => cfg(WitnessSpec::new(k))?,
        KappaChoice::Auto => match src.noise {
            Some(n) => cfg(WitnessSpec::new(cfg(optimal_kappa(n.eta_a, n.eta_b))?))?,
            None => optimize_witness(&src.state, LOG_KAPPA_RANGE)?.spec,
        },
    };
    let format = pick(c.format, f.format, Format::Json);
    let out = c.out.clone().or_else(|| f.out.clone());

    let ew = duan_ew(&src.state, &spec)?;
    let mdiew = mdi_score_analytic(&src.state, &spec)?;
    let report = ScoreReport::new(mdiew, 0.0, mdi_bound(spec.kappa, sigma)?, spec.kappa, sigma);
    let value = WitnessEvalReport {
        source: src.source,
        kappa: spec.kappa,
        orientation_a: spec.orientation_a,
        orientation_b: spec.orientation_b,
        ew,
        separable_bound: separable_bound_ew(spec.kappa)?,
        minimal_certifying_sigma: minimal_certifying_sigma(&src.state, &spec)?.unwrap_or(f64::INFINITY),
        report,
    };
    let rows = [
        ("kappa", num(value.kappa)),
        ("ew", num(value.ew)),
        ("separable_bound", num(value.separable_bound)),
        ("mdiew", num(report.score)),
        ("mdi_bound", num(report.bound)),
        ("sigma", num(sigma)),
        ("minimal_certifying_sigma", num(value.minimal_certifying_sigma)),
        ("verdict", verdict_name(&report)),
    ];
    emit(out.as_deref(), &json_or_csv(format, &value, &rows)?)
}

fn verdict_name(report: &ScoreReport) -> String {
    serde_json::to_value(report.verdict)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn resolve_prior(c: &CommonArgs, f: &FileConfig, p: &PriorArgs, default_sigma: f64) -> Result<PriorSpec, CliError> {
    let l = p.box_l.or(f.box_l);
    let delta = p.box_delta.or(f.box_delta);
    match (l, delta) {
        (Some(l), Some(delta)) => cfg(PriorSpec::smooth_box(l, delta)),
        (None, None) => {
            let sigma = pick(c.sigma, f.sigma, default_sigma);
            check_sigma(sigma)?;
            cfg(PriorSpec::gaussian(sigma))
        }
        _ => Err(CliError::Config("a smooth-box prior needs both --box-l and --box-delta".into())),
    }
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    source: Source,
    mode: &'static str,
    prior: PriorSpec,
    trials: usize,
    seed: u64,
    /// Expected score of the homodyne scheme; absent for the adversary.
    analytic_score: Option<f64>,
    report: ScoreReport,
    summary: BatchSummary,
}

pub fn mdi_simulate(c: &CommonArgs, f: &FileConfig, a: &SimulateArgs) -> Result<(), CliError> {
    let state_path = a.state.clone().or_else(|| f.state.clone());
    let src = resolve_source(c, f, state_path.as_deref())?;
    let prior = resolve_prior(c, f, &a.prior, 3.0)?;
    let trials = pick(c.trials, f.trials, 100_000);
    require(trials >= 1, "need at least one trial")?;
    let seed = pick(c.seed, f.seed, 0);
    let kappa = match pick(c.kappa, f.kappa, KappaChoice::Value(1.0)) {
        KappaChoice::Value(k) => k,
        KappaChoice::Auto => match src.noise {
            Some(n) => cfg(optimal_kappa(n.eta_a, n.eta_b))?,
            None => {
                return Err(CliError::Config(
                    "--kappa auto needs a lossy squeezed source; give κ explicitly for state files".into(),
                ))
            }
        },
    };
    let spec = cfg(WitnessSpec::new(kappa))?;
    let adversary = a.adversary || f.adversary.unwrap_or(false);
    let format = pick(c.format, f.format, Format::Json);
    let out = c.out.clone().or_else(|| f.out.clone());
    let samples_path = a
        .samples
        .clone()
        .or_else(|| f.samples.clone())
        .or_else(|| out.as_deref().map(|p| sibling(p, ".samples.csv")));

    let scheme = if adversary {
        MeasurementScheme::separable_heterodyne()
    } else {
        MeasurementScheme::with_known_means(&src.state)?
    };
    let config = BatchConfig {
        trials,
        seed,
        kappas: vec![kappa],
    };
    let batch = run_batch(&config, &src.state, &prior, &scheme)?;
    let report = match prior {
        PriorSpec::Gaussian { sigma } => mdi_score_from_samples(&batch.samples, &spec, sigma)?,
        _ => mdi_score_with_prior(&batch.samples, &spec, &prior)?,
    };
    let analytic_score = if adversary {
        None
    } else {
        Some(mdi_score_analytic(&src.state, &spec)?)
    };
    if let Some(path) = &samples_path {
        write_atomic(path, &samples_to_csv(&batch.samples))?;
    }
    let value = SimulationReport {
        source: src.source,
        mode: if adversary { "separable-heterodyne" } else { "paper-optimal" },
        prior,
        trials,
        seed,
        analytic_score,
        report,
        summary: batch.summary,
    };
    let mut rows = vec![
        ("mode", value.mode.to_string()),
        ("trials", trials.to_string()),
        ("seed", seed.to_string()),
        ("kappa", num(kappa)),
        ("score", num(report.score)),
        ("std_error", num(report.std_error)),
        ("bound", num(report.bound)),
        ("sigma", num(report.sigma)),
        ("verdict", verdict_name(&report)),
    ];
    if let Some(v) = analytic_score {
        rows.push(("analytic_score", num(v)));
    }
    emit(out.as_deref(), &json_or_csv(format, &value, &rows)?)
}

pub fn contour(c: &CommonArgs, f: &FileConfig, a: &ContourArgs) -> Result<(), CliError> {
    if let Some(KappaChoice::Value(k)) = c.kappa.or(f.kappa) {
        require(k == 1.0, "the contour scan is defined at κ = 1")?;
    }
    let r_max = pick(a.r_max, f.r_max, 2.5);
    let r_points = pick(a.r_points, f.r_points, 51);
    let eta_points = pick(a.eta_points, f.eta_points, 51);
    let sigmas = a
        .sigmas
        .clone()
        .or_else(|| f.sigma_list.clone())
        .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 5.0, 10.0]);
    require(r_max.is_finite() && r_max >= 0.0, format!("r-max must be finite and ≥ 0, got {r_max}"))?;
    require(r_points >= 2 && eta_points >= 2, "grids need at least two points")?;
    for &s in &sigmas {
        check_sigma(s)?;
    }
    let format = pick(c.format, f.format, Format::Csv);
    let out = c.out.clone().or_else(|| f.out.clone());

    let table = contour_scan(&linspace(0.0, r_max, r_points), &linspace(0.0, 1.0, eta_points), &sigmas)?;
    match format {
        Format::Json => emit(out.as_deref(), &to_json(&table)?),
        Format::Csv => match out.as_deref() {
            Some(path) => {
                write_atomic(path, &table.values_csv())?;
                if !sigmas.is_empty() {
                    write_atomic(&sibling(path, "_boundary.csv"), &table.boundary_csv())?;
                }
                Ok(())
            }
            None => {
                let mut text = table.values_csv();
                if !sigmas.is_empty() {
                    text.push('\n');
                    text.push_str(&table.boundary_csv());
                }
                emit(None, &text)
            }
        },
    }
}

#[derive(Debug, Serialize)]
struct PriorReport {
    prior: PriorSpec,
    kappa: f64,
    fim: [[f64; 2]; 2],
    fim_numerical: [[f64; 2]; 2],
    component_variance: f64,
    bound: SeparableBound,
}

pub fn prior_fim(c: &CommonArgs, f: &FileConfig, a: &PriorArgs) -> Result<(), CliError> {
    let prior = resolve_prior(c, f, a, 1.0)?;
    let kappa = match pick(c.kappa, f.kappa, KappaChoice::Value(1.0)) {
        KappaChoice::Value(k) => k,
        KappaChoice::Auto => return Err(CliError::Config("--kappa auto has no meaning for prior-fim".into())),
    };
    cfg(WitnessSpec::new(kappa))?;
    let format = pick(c.format, f.format, Format::Json);
    let out = c.out.clone().or_else(|| f.out.clone());

    let closed: FisherMatrix = fim(&prior)?;
    let numeric = fim_numerical(&prior)?;
    let bound = separable_mdi_bound(kappa, &prior)?;
    let value = PriorReport {
        prior,
        kappa,
        fim: closed.to_rows(),
        fim_numerical: numeric.to_rows(),
        component_variance: prior.component_variance(),
        bound,
    };
    let rows = [
        ("fim_xx", num(value.fim[0][0])),
        ("fim_pp", num(value.fim[1][1])),
        ("fim_numerical_xx", num(value.fim_numerical[0][0])),
        ("fim_numerical_pp", num(value.fim_numerical[1][1])),
        ("component_variance", num(value.component_variance)),
        ("crb_sum", num(bound.crb_sum)),
        ("sigma_effective", num(bound.sigma_effective)),
        ("bound", num(bound.value)),
        ("possibly_loose", bound.possibly_loose.to_string()),
    ];
    emit(out.as_deref(), &json_or_csv(format, &value, &rows)?)
}
