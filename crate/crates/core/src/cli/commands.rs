use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{read_design, LoadedConfig, ProblemConfig};
use crate::covariance::{
    criterion_value, estimator_covariance, sensitivity_grid, simulate_ols_covariance, Covariance, ExactDesign,
    SensitivityGrid,
};
use crate::density::{design_from_density, DesignRule, PolyDensity};
use crate::error::{Error, Result};
use crate::optimize::{exact_optimal_design, optimize_density, OptimResult, SimplexConfig};
use crate::problem::{Estimator, PopulationProblem};

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct CommonOpts {
    pub out: PathBuf,
    pub quad_nodes: Option<usize>,
    pub seed: Option<u64>,
}

/// Loads a config and applies command-line overrides before validation.
pub fn load(config_path: &Path, opts: &CommonOpts) -> Result<LoadedConfig> {
    let mut cfg = ProblemConfig::load(config_path)?;
    if let Some(n) = opts.quad_nodes {
        cfg.density.quad_nodes = n;
    }
    if let Some(s) = opts.seed {
        cfg.density.seed = s;
    }
    cfg.resolve()
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn output_path(opts: &CommonOpts, config_path: &Path, suffix: &str) -> PathBuf {
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".into());
    opts.out.join(format!("{stem}.{suffix}"))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn note(warnings: &mut Vec<String>, label: &str, cov: &Covariance) {
    if let Some(w) = cov.warning() {
        warnings.push(format!("{label}: {w}"));
    }
}

/// `t,phi,cdf` on the density's quadrature grid.
pub fn density_csv(phi: &PolyDensity) -> String {
    let mut out = String::from("t,phi,cdf\n");
    for ((t, f), c) in phi.grid().iter().zip(phi.grid_density()).zip(phi.cdf_table()) {
        out.push_str(&format!("{t},{f},{c}\n"));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub degree: usize,
    /// Coefficients of the unnormalized polynomial in powers of t.
    pub coeffs: Vec<f64>,
    /// The same polynomial in `u = (2t - lo - hi) / (hi - lo)`.
    pub centered_coeffs: Vec<f64>,
    pub norm: f64,
    pub criterion: f64,
    pub support: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub points: Vec<f64>,
    pub criterion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinedReport {
    pub estimator: Estimator,
    pub points: Vec<f64>,
    pub criterion: f64,
    pub optimizer: OptimResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveEfficiencies {
    pub quantile: f64,
    pub uniform: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub command: &'static str,
    pub config: ProblemConfig,
    pub seed: u64,
    pub density: DensityReport,
    pub optimizer: OptimResult,
    pub rule: DesignRule,
    pub quantile_design: DesignReport,
    pub uniform_design: DesignReport,
    pub refined: Option<RefinedReport>,
    pub efficiencies: Option<SolveEfficiencies>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub density_csv: String,
}

/// Equally spaced comparator matching the design rule.
pub fn uniform_design(problem: &PopulationProblem, n: usize, rule: DesignRule) -> Result<ExactDesign> {
    match rule {
        DesignRule::Endpoints => ExactDesign::equidistant(&problem.domain, n),
        DesignRule::Interior => ExactDesign::equidistant_right(&problem.domain, n),
    }
}

/// Density optimization, quantile design and refinement.
pub fn solve(loaded: &LoadedConfig) -> Result<SolveReport> {
    let cfg = &loaded.config;
    let problem = &loaded.problem;
    let simplex = SimplexConfig::default();
    let crit = problem.resolved_criterion()?;
    let opt = optimize_density(
        problem,
        cfg.density.degree,
        cfg.density.restarts,
        &loaded.quad,
        &simplex,
        cfg.density.seed,
    )?;
    let phi = &opt.density;
    let (lo, hi) = phi.support();
    let n = cfg.design.n;
    let quantile = design_from_density(phi, n, cfg.design.rule)?;
    let uniform = uniform_design(problem, n, cfg.design.rule)?;
    let estimator = cfg.refine.estimator;
    let mut warnings = Vec::new();
    let q_cov = estimator_covariance(problem, &quantile, estimator)?;
    let u_cov = estimator_covariance(problem, &uniform, estimator)?;
    note(&mut warnings, "quantile design", &q_cov);
    note(&mut warnings, "uniform design", &u_cov);
    let q_value = criterion_value(&q_cov.matrix, &crit);
    let u_value = criterion_value(&u_cov.matrix, &crit);

    let (refined, efficiencies) = if cfg.refine.enabled {
        let (design, result) = exact_optimal_design(problem, n, estimator, std::slice::from_ref(&quantile), &simplex)?;
        note(
            &mut warnings,
            "refined design",
            &estimator_covariance(problem, &design, estimator)?,
        );
        let eff = |v: f64| crate::covariance::efficiency_from_values(v, result.value, &crit, problem.p());
        let effs = SolveEfficiencies {
            quantile: eff(q_value),
            uniform: eff(u_value),
        };
        (
            Some(RefinedReport {
                estimator,
                points: design.points().to_vec(),
                criterion: result.value,
                optimizer: result,
            }),
            Some(effs),
        )
    } else {
        (None, None)
    };

    Ok(SolveReport {
        command: "solve",
        config: cfg.clone(),
        seed: cfg.density.seed,
        density: DensityReport {
            degree: opt.degree,
            coeffs: phi.coeffs(),
            centered_coeffs: phi.centered_coeffs(),
            norm: phi.norm(),
            criterion: opt.result.value,
            support: [lo, hi],
        },
        optimizer: opt.result.clone(),
        rule: cfg.design.rule,
        quantile_design: DesignReport {
            points: quantile.points().to_vec(),
            criterion: q_value,
        },
        uniform_design: DesignReport {
            points: uniform.points().to_vec(),
            criterion: u_value,
        },
        refined,
        efficiencies,
        warnings,
        density_csv: density_csv(phi),
    })
}

/// Files written by `solve`.
pub fn cmd_solve(config_path: &Path, opts: &CommonOpts) -> Result<(SolveReport, PathBuf, PathBuf)> {
    let loaded = load(config_path, opts)?;
    let report = solve(&loaded)?;
    let json = output_path(opts, config_path, "solve.json");
    let csv = output_path(opts, config_path, "density.csv");
    write_json(&json, &report)?;
    write_atomic(&csv, report.density_csv.as_bytes())?;
    Ok((report, json, csv))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorEfficiency {
    pub efficiency: f64,
    pub criterion_design: f64,
    pub criterion_reference: f64,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffReport {
    pub command: &'static str,
    pub config: ProblemConfig,
    pub seed: u64,
    pub design: Vec<f64>,
    /// True when the reference was computed as the refined exact optimum.
    pub reference_optimized: bool,
    pub ols: EstimatorEfficiency,
    pub wls: EstimatorEfficiency,
    pub warnings: Vec<String>,
}

/// Efficiencies of `design` against `reference`, or against the refined
/// exact optimum of the same size when no reference is given.
pub fn efficiency_report(
    loaded: &LoadedConfig,
    design: &ExactDesign,
    reference: Option<&ExactDesign>,
) -> Result<EffReport> {
    let problem = &loaded.problem;
    let crit = problem.resolved_criterion()?;
    let simplex = SimplexConfig::default();
    let mut warnings = Vec::new();
    let mut per = |est: Estimator| -> Result<EstimatorEfficiency> {
        let cov = estimator_covariance(problem, design, est)?;
        note(&mut warnings, &format!("{est:?} design"), &cov);
        let value = criterion_value(&cov.matrix, &crit);
        let (ref_points, ref_value) = match reference {
            Some(r) => {
                let rc = estimator_covariance(problem, r, est)?;
                note(&mut warnings, &format!("{est:?} reference"), &rc);
                (r.points().to_vec(), criterion_value(&rc.matrix, &crit))
            }
            None => {
                let (d, res) = exact_optimal_design(problem, design.n(), est, std::slice::from_ref(design), &simplex)?;
                (d.points().to_vec(), res.value)
            }
        };
        Ok(EstimatorEfficiency {
            efficiency: crate::covariance::efficiency_from_values(value, ref_value, &crit, problem.p()),
            criterion_design: value,
            criterion_reference: ref_value,
            reference: ref_points,
        })
    };
    let ols = per(Estimator::Ols)?;
    let wls = per(Estimator::Wls)?;
    Ok(EffReport {
        command: "eff",
        config: loaded.config.clone(),
        seed: loaded.config.density.seed,
        design: design.points().to_vec(),
        reference_optimized: reference.is_none(),
        ols,
        wls,
        warnings,
    })
}

pub fn cmd_efficiency(
    config_path: &Path,
    design_path: &Path,
    reference_path: Option<&Path>,
    opts: &CommonOpts,
) -> Result<(EffReport, PathBuf)> {
    let loaded = load(config_path, opts)?;
    let domain = loaded.problem.domain;
    let design = read_design(design_path, &domain)?;
    let reference = reference_path.map(|p| read_design(p, &domain)).transpose()?;
    let report = efficiency_report(&loaded, &design, reference.as_ref())?;
    let path = output_path(opts, config_path, "eff.json");
    write_json(&path, &report)?;
    Ok((report, path))
}

/// Sensitivity request: 0-based axes, per-axis intervals and node counts.
#[derive(Debug, Clone)]
pub struct SensOpts {
    pub axes: (usize, usize),
    pub boxes: [(f64, f64); 2],
    pub grid: (usize, usize),
    pub estimator: Estimator,
}

pub fn cmd_sensitivity(
    config_path: &Path,
    design_path: &Path,
    sens: &SensOpts,
    opts: &CommonOpts,
) -> Result<(SensitivityGrid, PathBuf)> {
    let loaded = load(config_path, opts)?;
    let design = read_design(design_path, &loaded.problem.domain)?;
    let grid = sensitivity_grid(
        &design,
        &loaded.problem,
        sens.axes,
        sens.boxes,
        sens.grid,
        sens.estimator,
        &SimplexConfig::default(),
    )?;
    let path = output_path(opts, config_path, "sens.csv");
    write_atomic(&path, grid.to_csv().as_bytes())?;
    Ok((grid, path))
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub command: &'static str,
    pub config: ProblemConfig,
    pub seed: u64,
    pub k: usize,
    pub design: Vec<f64>,
    pub analytic: Vec<Vec<f64>>,
    pub monte_carlo: Vec<Vec<f64>>,
    /// `||MC - analytic||_F / ||analytic||_F` (absolute when the analytic
    /// covariance is zero).
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Replicate count below which Monte-Carlo error is expected to exceed the
/// pass threshold.
pub const MIN_REPLICATES: usize = 1000;
pub const VALIDATE_TOLERANCE: f64 = 0.05;

pub fn validate_report(loaded: &LoadedConfig, design: &ExactDesign, k: usize, seed: u64) -> Result<ValidateReport> {
    let problem = &loaded.problem;
    let mut warnings = Vec::new();
    if k < MIN_REPLICATES {
        warnings.push(format!(
            "K = {k} is below {MIN_REPLICATES}; expect a large Monte-Carlo error"
        ));
    }
    let analytic = estimator_covariance(problem, design, Estimator::Ols)?;
    note(&mut warnings, "analytic", &analytic);
    let mc = simulate_ols_covariance(problem, design, k, seed)?;
    let diff = (&mc - &analytic.matrix).norm();
    let scale = analytic.matrix.norm();
    let relative_error = if scale > 0.0 { diff / scale } else { diff };
    Ok(ValidateReport {
        command: "validate",
        config: loaded.config.clone(),
        seed,
        k,
        design: design.points().to_vec(),
        analytic: rows(&analytic.matrix),
        monte_carlo: rows(&mc),
        relative_error,
        tolerance: VALIDATE_TOLERANCE,
        pass: relative_error < VALIDATE_TOLERANCE,
        warnings,
    })
}

pub fn cmd_validate(
    config_path: &Path,
    design_path: &Path,
    k: usize,
    seed: u64,
    opts: &CommonOpts,
) -> Result<(ValidateReport, PathBuf)> {
    let loaded = load(config_path, opts)?;
    let design = read_design(design_path, &loaded.problem.domain)?;
    let report = validate_report(&loaded, &design, k, seed)?;
    let path = output_path(opts, config_path, "validate.json");
    write_json(&path, &report)?;
    Ok((report, path))
}
