//! Nelder–Mead simplex search, multistart optimization of the design
//! density and refinement of exact designs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{covariance_from_points, criterion_value, ExactDesign};
use crate::density::{AsymptoticWorkspace, PolyDensity, QuadratureSpec, NORM_FLOOR};
use crate::error::{Error, Result};
use crate::problem::{Domain, Estimator, PopulationProblem, ResolvedCriterion};

/// Relative size of the seeded perturbation of restart coefficients.
pub const RESTART_NOISE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    pub max_iter: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Initial edge length relative to `max(|x_i|, 1)`.
    pub initial_step: f64,
    /// Times the simplex is rebuilt around the best point after convergence.
    pub max_restarts: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        SimplexConfig {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            max_iter: 2000,
            f_tol: 1e-10,
            x_tol: 1e-9,
            initial_step: 0.1,
            max_restarts: 3,
        }
    }
}

impl SimplexConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflection > 0.0
            && self.expansion > 1.0
            && self.contraction > 0.0
            && self.contraction < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.initial_step > 0.0
            && self.f_tol >= 0.0
            && self.x_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid simplex coefficients: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

struct Simplex {
    pts: Vec<Vec<f64>>,
    vals: Vec<f64>,
}

impl Simplex {
    fn around<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], step: f64) -> Simplex {
        let mut pts = vec![x.to_vec()];
        for i in 0..x.len() {
            let mut v = x.to_vec();
            v[i] += step * x[i].abs().max(1.0);
            pts.push(v);
        }
        let vals = pts.iter().map(|p| nan_to_inf(f(p))).collect();
        Simplex { pts, vals }
    }

    fn sort(&mut self) {
        let mut idx: Vec<usize> = (0..self.pts.len()).collect();
        idx.sort_by(|&a, &b| self.vals[a].total_cmp(&self.vals[b]));
        self.pts = idx.iter().map(|&i| self.pts[i].clone()).collect();
        self.vals = idx.iter().map(|&i| self.vals[i]).collect();
    }

    fn spread(&self) -> f64 {
        let last = *self.vals.last().unwrap();
        if last == self.vals[0] {
            0.0
        } else {
            last - self.vals[0]
        }
    }

    fn diameter(&self) -> f64 {
        let best = &self.pts[0];
        self.pts[1..]
            .iter()
            .map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

/// One simplex run; returns (iterations, converged).
fn simplex_run<F: FnMut(&[f64]) -> f64>(f: &mut F, s: &mut Simplex, cfg: &SimplexConfig) -> (usize, bool) {
    let n = s.pts[0].len();
    let along = |c: &[f64], w: &[f64], coef: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + coef * (ci - wi)).collect()
    };
    for it in 0..cfg.max_iter {
        s.sort();
        if s.spread() <= cfg.f_tol && s.diameter() <= cfg.x_tol {
            return (it, true);
        }
        let mut centroid = vec![0.0; n];
        for p in &s.pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let worst = s.pts[n].clone();
        let f_worst = s.vals[n];
        let xr = along(&centroid, &worst, cfg.reflection);
        let fr = nan_to_inf(f(&xr));
        if fr < s.vals[0] {
            let xe = along(&centroid, &worst, cfg.reflection * cfg.expansion);
            let fe = nan_to_inf(f(&xe));
            if fe < fr {
                s.pts[n] = xe;
                s.vals[n] = fe;
            } else {
                s.pts[n] = xr;
                s.vals[n] = fr;
            }
            continue;
        }
        if fr < s.vals[n - 1] {
            s.pts[n] = xr;
            s.vals[n] = fr;
            continue;
        }
        // contraction: outside if the reflection beat the worst point
        let (xc, fc) = if fr < f_worst {
            let xc = along(&centroid, &worst, cfg.reflection * cfg.contraction);
            let fc = nan_to_inf(f(&xc));
            (xc, if fc <= fr { fc } else { f64::INFINITY })
        } else {
            let xc = along(&centroid, &worst, -cfg.contraction);
            let fc = nan_to_inf(f(&xc));
            (xc, if fc < f_worst { fc } else { f64::INFINITY })
        };
        if fc.is_finite() {
            s.pts[n] = xc;
            s.vals[n] = fc;
            continue;
        }
        let best = s.pts[0].clone();
        for i in 1..=n {
            let p: Vec<f64> = best
                .iter()
                .zip(&s.pts[i])
                .map(|(b, x)| b + cfg.shrink * (x - b))
                .collect();
            s.vals[i] = nan_to_inf(f(&p));
            s.pts[i] = p;
        }
    }
    s.sort();
    (cfg.max_iter, false)
}

/// Minimizes `objective` from `x0`. Infinite values act as penalties. After
/// each convergence the simplex is rebuilt around the best point, up to
/// `max_restarts` times, until a restart no longer improves by `f_tol`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    config: &SimplexConfig,
) -> Result<OptimResult> {
    config.validate()?;
    let f0 = objective(x0);
    if !f0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidStart(f0));
    }
    if x0.is_empty() {
        return Ok(OptimResult {
            x: vec![],
            value: f0,
            iterations: 0,
            converged: true,
            restarts_used: 0,
        });
    }
    let mut best_x = x0.to_vec();
    let mut best_f = f0;
    let mut iterations = 0;
    let mut converged = false;
    let mut restarts_used = 0;
    for round in 0..=config.max_restarts {
        let mut s = Simplex::around(&mut objective, &best_x, config.initial_step);
        let (it, conv) = simplex_run(&mut objective, &mut s, config);
        iterations += it;
        converged = conv;
        let improved = best_f - s.vals[0];
        if s.vals[0] <= best_f {
            best_f = s.vals[0];
            best_x = s.pts[0].clone();
        }
        restarts_used = round;
        if conv && improved.abs() <= config.f_tol {
            break;
        }
    }
    Ok(OptimResult {
        x: best_x,
        value: best_f,
        iterations,
        converged,
        restarts_used,
    })
}

/// Evaluates the positive part of a centered-variable polynomial at the
/// workspace grid and normalizes it; `None` when the mass vanishes.
fn grid_density(coeffs: &[f64], ws: &AsymptoticWorkspace, domain: &Domain) -> Option<Vec<f64>> {
    let center = 0.5 * (domain.lo + domain.hi);
    let half = 0.5 * domain.width();
    let vals: Vec<f64> = ws
        .grid
        .iter()
        .map(|&t| {
            let u = (t - center) / half;
            coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c).max(0.0)
        })
        .collect();
    let norm: f64 = vals.iter().zip(&ws.weights).map(|(v, w)| v * w).sum();
    if !(norm >= NORM_FLOOR) || !norm.is_finite() {
        return None;
    }
    Some(vals.into_iter().map(|v| v / norm).collect())
}

fn normalize_max_abs(c: &[f64]) -> Option<Vec<f64>> {
    let m = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(m > 0.0) || !m.is_finite() {
        return None;
    }
    Some(c.iter().map(|v| v / m).collect())
}

/// Criterion of `V(phi)` for coefficients in the centered variable;
/// `+inf` for degenerate densities.
fn density_objective(
    coeffs: &[f64],
    ws: &AsymptoticWorkspace,
    problem: &PopulationProblem,
    crit: &ResolvedCriterion,
) -> f64 {
    let Some(c) = normalize_max_abs(coeffs) else {
        return f64::INFINITY;
    };
    let Some(phi) = grid_density(&c, ws, &problem.domain) else {
        return f64::INFINITY;
    };
    match ws.asymptotic_covariance(&phi, problem.noise.sigma2, &problem.corr) {
        Ok(v) => {
            let value = criterion_value(&v, crit);
            if value > 0.0 && value.is_finite() {
                value
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Criterion of `V(phi)` for an arbitrary density on the problem's domain.
pub fn density_criterion(phi: &PolyDensity, problem: &PopulationProblem) -> Result<f64> {
    let v = crate::density::asymptotic_covariance_v(phi, problem)?;
    Ok(criterion_value(&v, &problem.resolved_criterion()?))
}

/// Result of the density search.
#[derive(Debug, Clone)]
pub struct DensityOptimum {
    pub density: PolyDensity,
    /// `x` holds the centered-variable coefficients (unit max-abs);
    /// `value` is the criterion of `V(phi)`.
    pub result: OptimResult,
    pub degree: usize,
}

fn degree_schedule(degree: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [2, 4].into_iter().filter(|&d| d < degree).collect();
    out.push(degree);
    out
}

fn start_point(degree: usize, restart: usize, seed: u64) -> Vec<f64> {
    let mut x = vec![0.0; degree + 1];
    x[0] = 1.0;
    if restart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((degree as u64) << 32) | restart as u64);
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += RESTART_NOISE * z;
        }
    }
    x
}

/// Minimizes the criterion of the asymptotic covariance `V(phi)` over
/// polynomial densities of degree at most `degree`.
///
/// Searches degrees 2, 4 and `degree` (those not above `degree`), each from
/// the uniform density and `restarts - 1` seeded perturbations of it, and
/// returns the best density found. Ties go to the lower degree.
pub fn optimize_density(
    problem: &PopulationProblem,
    degree: usize,
    restarts: usize,
    quad: &QuadratureSpec,
    config: &SimplexConfig,
    seed: u64,
) -> Result<DensityOptimum> {
    if restarts < 1 {
        return Err(Error::config("density.restarts", "must be at least 1"));
    }
    config.validate()?;
    let crit = problem.resolved_criterion()?;
    let ws = AsymptoticWorkspace::for_problem(problem, quad)?;
    let objective = |c: &[f64]| {
        let v = density_objective(c, &ws, problem, &crit);
        if v.is_finite() {
            v.ln()
        } else {
            v
        }
    };

    if degree == 0 {
        let density = PolyDensity::uniform(&problem.domain, quad);
        let value = density_objective(&[1.0], &ws, problem, &crit);
        if !value.is_finite() {
            return Err(Error::OptimizationFailed(
                "the uniform density is degenerate for this problem".into(),
            ));
        }
        return Ok(DensityOptimum {
            density,
            result: OptimResult {
                x: vec![1.0],
                value,
                iterations: 0,
                converged: true,
                restarts_used: 0,
            },
            degree: 0,
        });
    }

    let jobs: Vec<(usize, usize)> = degree_schedule(degree)
        .into_iter()
        .flat_map(|d| (0..restarts).map(move |r| (d, r)))
        .collect();
    let runs: Vec<(usize, usize, Option<OptimResult>)> = jobs
        .par_iter()
        .map(|&(d, r)| {
            let x0 = start_point(d, r, seed);
            (d, r, nelder_mead(objective, &x0, config).ok())
        })
        .collect();

    let mut best: Option<(usize, OptimResult)> = None;
    let mut iterations = 0;
    for (d, _, run) in runs {
        let Some(run) = run else { continue };
        iterations += run.iterations;
        if !run.value.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| run.value < b.value) {
            best = Some((d, run));
        }
    }
    let Some((d, mut run)) = best else {
        return Err(Error::OptimizationFailed(
            "every restart produced a degenerate density".into(),
        ));
    };
    let x = normalize_max_abs(&run.x).ok_or_else(|| Error::OptimizationFailed("zero coefficients".into()))?;
    let density = PolyDensity::from_centered(&x, &problem.domain, quad)?;
    run.value = run.value.exp();
    run.x = x;
    run.iterations = iterations;
    run.restarts_used = restarts;
    Ok(DensityOptimum {
        density,
        result: run,
        degree: d,
    })
}

/// Maps between ordered designs and unconstrained vectors: the n + 1 gaps
/// (before the first point, between points, after the last) are
/// `slack * softmax(z, 0)` plus the minimal spacing between points.
struct GapMap {
    lo: f64,
    hi: f64,
    n: usize,
    floor: f64,
    slack: f64,
}

impl GapMap {
    fn new(domain: &Domain, n: usize) -> GapMap {
        let floor = 1.001 * domain.spacing_floor();
        GapMap {
            lo: domain.lo,
            hi: domain.hi,
            n,
            floor,
            slack: domain.width() - (n.saturating_sub(1)) as f64 * floor,
        }
    }

    fn points(&self, z: &[f64], out: &mut [f64]) {
        let m = z.iter().fold(0.0f64, |a, &v| a.max(v));
        let mut w: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        w.push((-m).exp());
        let total: f64 = w.iter().sum();
        let mut t = self.lo;
        for j in 0..self.n {
            t += self.slack * w[j] / total;
            if j > 0 {
                t += self.floor;
            }
            out[j] = t.min(self.hi);
        }
    }

    fn logits(&self, points: &[f64]) -> Vec<f64> {
        let mut gaps = Vec::with_capacity(self.n + 1);
        gaps.push(points[0] - self.lo);
        for w in points.windows(2) {
            gaps.push(w[1] - w[0] - self.floor);
        }
        gaps.push(self.hi - points[self.n - 1]);
        let s: Vec<f64> = gaps.iter().map(|g| (g / self.slack).max(1e-12)).collect();
        let last = s[self.n].ln();
        s[..self.n].iter().map(|v| v.ln() - last).collect()
    }
}

/// Optimizes the points of `init` directly under the finite-design
/// criterion (including `V_p`). Never returns a design worse than `init`.
pub fn refine_exact_design(
    problem: &PopulationProblem,
    init: &ExactDesign,
    estimator: Estimator,
    config: &SimplexConfig,
) -> Result<(ExactDesign, OptimResult)> {
    crate::covariance::check_design(problem, init)?;
    let crit = problem.resolved_criterion()?;
    let eval = |pts: &[f64]| -> f64 {
        match covariance_from_points(problem, pts, estimator) {
            Ok(m) => {
                let v = criterion_value(&m.matrix, &crit);
                if v > 0.0 && v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let init_value = eval(init.points());
    let n = init.n();
    let map = GapMap::new(&problem.domain, n);
    let z0 = map.logits(init.points());
    let mut buf = vec![0.0; n];
    let objective = |z: &[f64]| {
        let mut pts = vec![0.0; n];
        map.points(z, &mut pts);
        eval(&pts).ln()
    };
    let run = nelder_mead(objective, &z0, config);
    let keep_init = |iterations, converged| {
        Ok((
            init.clone(),
            OptimResult {
                x: z0.clone(),
                value: init_value,
                iterations,
                converged,
                restarts_used: 0,
            },
        ))
    };
    let run = match run {
        Ok(r) => r,
        // the reconstructed start can be infeasible when init sits on the
        // spacing floor; fall back to the initial design
        Err(Error::InvalidStart(_)) => return keep_init(0, false),
        Err(e) => return Err(e),
    };
    map.points(&run.x, &mut buf);
    let value = eval(&buf);
    if !(value < init_value) {
        return keep_init(run.iterations, run.converged);
    }
    match ExactDesign::new(buf, &problem.domain) {
        Ok(design) => Ok((design, OptimResult { value, ..run })),
        Err(_) => keep_init(run.iterations, run.converged),
    }
}

/// Number of seeded random designs added to the starts of
/// [`exact_optimal_design`].
pub const RANDOM_STARTS: usize = 6;
const RANDOM_START_SEED: u64 = 0x5eed;

/// Best refined n-point design from `extra_starts`, the uniform interior
/// design, the equidistant design and a few seeded random designs.
pub fn exact_optimal_design(
    problem: &PopulationProblem,
    n: usize,
    estimator: Estimator,
    extra_starts: &[ExactDesign],
    config: &SimplexConfig,
) -> Result<(ExactDesign, OptimResult)> {
    let mut starts: Vec<ExactDesign> = extra_starts.iter().filter(|d| d.n() == n).cloned().collect();
    starts.push(ExactDesign::uniform_interior(&problem.domain, n)?);
    if n >= 2 {
        starts.push(ExactDesign::equidistant(&problem.domain, n)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_START_SEED);
    for _ in 0..RANDOM_STARTS {
        let pts: Vec<f64> = (0..n)
            .map(|_| problem.domain.lo + problem.domain.width() * rng.random::<f64>())
            .collect();
        if let Ok(d) = ExactDesign::new(pts, &problem.domain) {
            starts.push(d);
        }
    }
    let runs: Vec<Result<(ExactDesign, OptimResult)>> = starts
        .par_iter()
        .map(|s| refine_exact_design(problem, s, estimator, config))
        .collect();
    let mut best: Option<(ExactDesign, OptimResult)> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok((d, res)) if res.value.is_finite() => {
                if best.as_ref().is_none_or(|(_, b)| res.value < b.value) {
                    best = Some((d, res));
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    let (mut design, mut result) = best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::OptimizationFailed(format!("no feasible {n}-point design found")))
    })?;
    // the simplex cannot move a point across a cluster it is not part of;
    // alternate single-point exchanges on a grid with simplex refinement
    for _ in 0..EXCHANGE_ROUNDS {
        let Some((pts, value)) = best_exchange(problem, design.points(), result.value, estimator)? else {
            break;
        };
        let start = ExactDesign::new(pts, &problem.domain)?;
        let (refined, mut res) = refine_exact_design(problem, &start, estimator, config)?;
        if !(res.value < result.value) {
            break;
        }
        res.value = res.value.min(value);
        res.iterations += result.iterations;
        design = refined;
        result = res;
    }
    Ok((design, result))
}

/// Candidate positions per point in the exchange step.
const EXCHANGE_GRID: usize = 201;
const EXCHANGE_ROUNDS: usize = 10;

/// Best design obtained by moving a single point to a grid node, if it
/// improves on `current` by more than a relative 1e-10.
fn best_exchange(
    problem: &PopulationProblem,
    points: &[f64],
    current: f64,
    estimator: Estimator,
) -> Result<Option<(Vec<f64>, f64)>> {
    let crit = problem.resolved_criterion()?;
    let dom = &problem.domain;
    let floor = dom.spacing_floor();
    let candidates: Vec<f64> = (0..EXCHANGE_GRID)
        .map(|k| dom.lo + dom.width() * k as f64 / (EXCHANGE_GRID - 1) as f64)
        .collect();
    let best = (0..points.len())
        .into_par_iter()
        .filter_map(|i| {
            let mut best: Option<(Vec<f64>, f64)> = None;
            for &c in &candidates {
                let mut pts = points.to_vec();
                pts[i] = c;
                pts.sort_by(f64::total_cmp);
                if pts.windows(2).any(|w| w[1] - w[0] < floor) {
                    continue;
                }
                let Ok(m) = covariance_from_points(problem, &pts, estimator) else {
                    continue;
                };
                let v = criterion_value(&m.matrix, &crit);
                if v > 0.0 && v.is_finite() && best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((pts, v));
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a });
    Ok(best.filter(|(_, v)| *v < current * (1.0 - 1e-10)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::CorrelationSpec;
    use crate::covariance::design_criterion;
    use crate::model::{builtin_model, NoiseSpec};
    use crate::problem::{Criterion, PopulationSpec};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn quadratic(gamma: f64, lambda: f64) -> PopulationProblem {
        PopulationProblem::new(
            builtin_model("quadratic", None).unwrap(),
            NoiseSpec::homoscedastic(0.5).unwrap(),
            CorrelationSpec::exponential(gamma, lambda).unwrap(),
            PopulationSpec::new(vec![0.0; 3], DMatrix::from_diagonal_element(3, 3, 0.09)).unwrap(),
            Domain::new(-1.0, 1.0).unwrap(),
            Criterion::D,
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_parabola() {
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2), &[0.0], &SimplexConfig::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-8);
        assert!(r.value < 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn sphere() {
        let r = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &[3.0, -4.0], &SimplexConfig::default()).unwrap();
        assert!(r.x[0].abs() < 1e-6 && r.x[1].abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], &SimplexConfig::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn invalid_start() {
        let r = nelder_mead(|_| f64::INFINITY, &[0.0], &SimplexConfig::default());
        assert!(matches!(r, Err(Error::InvalidStart(_))));
        let r = nelder_mead(|_| f64::NAN, &[0.0], &SimplexConfig::default());
        assert!(matches!(r, Err(Error::InvalidStart(_))));
    }

    #[test]
    fn penalties_are_avoided() {
        let f = |x: &[f64]| {
            if x[0] < 0.5 {
                f64::INFINITY
            } else {
                (x[0] - 0.2).powi(2)
            }
        };
        let r = nelder_mead(f, &[2.0], &SimplexConfig::default()).unwrap();
        assert!(r.value.is_finite() && r.x[0] >= 0.5);
        assert!((r.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let cfg = SimplexConfig {
            expansion: 0.5,
            ..SimplexConfig::default()
        };
        assert!(nelder_mead(|x| x[0], &[0.0], &cfg).is_err());
    }

    #[test]
    fn degree_zero_is_uniform() {
        let p = quadratic(0.5, 1.0);
        let q = QuadratureSpec::default();
        let r = optimize_density(&p, 0, 8, &q, &SimplexConfig::default(), 1).unwrap();
        let uni = PolyDensity::uniform(&p.domain, &q);
        assert_eq!(r.density.grid_density(), uni.grid_density());
        assert_eq!(r.degree, 0);
    }

    #[test]
    fn near_uniform_limits() {
        let q = QuadratureSpec::default();
        for (gamma, lambda) in [(0.999, 0.2), (0.6, 0.01)] {
            let p = quadratic(gamma, lambda);
            let r = optimize_density(&p, 6, 8, &q, &SimplexConfig::default(), 3).unwrap();
            let uni = density_criterion(&PolyDensity::uniform(&p.domain, &q), &p).unwrap();
            assert!(r.result.value <= uni * (1.0 + 1e-9));
            assert!(
                r.result.value >= 0.99 * uni,
                "{gamma} {lambda}: {} vs {uni}",
                r.result.value
            );
        }
    }

    #[test]
    fn density_search_is_deterministic_and_multistart_dominates() {
        let p = quadratic(0.6, 1.2);
        let q = QuadratureSpec::new(101).unwrap();
        let cfg = SimplexConfig::default();
        let a = optimize_density(&p, 4, 3, &q, &cfg, 11).unwrap();
        let b = optimize_density(&p, 4, 3, &q, &cfg, 11).unwrap();
        assert_eq!(a.result, b.result);
        let one = optimize_density(&p, 4, 1, &q, &cfg, 11).unwrap();
        assert!(a.result.value <= one.result.value);
        assert!(a.density.grid_density().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn refine_constant_model_keeps_init() {
        let p = PopulationProblem::new(
            builtin_model("constant", None).unwrap(),
            NoiseSpec::homoscedastic(1.0).unwrap(),
            CorrelationSpec::exponential(0.0, 1.0).unwrap(),
            PopulationSpec::new(vec![1.0], DMatrix::from_element(1, 1, 0.1)).unwrap(),
            Domain::new(0.0, 1.0).unwrap(),
            Criterion::D,
        )
        .unwrap();
        let init = ExactDesign::new(vec![0.1, 0.4, 0.8], &p.domain).unwrap();
        let (d, r) = refine_exact_design(&p, &init, Estimator::Ols, &SimplexConfig::default()).unwrap();
        assert_eq!(d, init);
        assert!((r.value - (1.0 / 3.0 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn refined_uncorrelated_quadratic_clusters() {
        let p = quadratic(0.01, 5.0);
        let init = ExactDesign::uniform_interior(&p.domain, 6).unwrap();
        let (d, _) = exact_optimal_design(&p, 6, Estimator::Ols, &[init], &SimplexConfig::default()).unwrap();
        for target in [-1.0, 0.0, 1.0] {
            let close = d.points().iter().filter(|t| (*t - target).abs() < 0.1).count();
            assert!(close >= 2, "{:?}", d.points());
        }
    }

    #[test]
    fn gap_map_round_trip() {
        let dom = Domain::new(0.0, 36.0).unwrap();
        let pts = [0.25, 0.75, 1.25, 2.0, 3.0, 36.0];
        let map = GapMap::new(&dom, pts.len());
        let z = map.logits(&pts);
        let mut out = vec![0.0; pts.len()];
        map.points(&z, &mut out);
        for (a, b) in out.iter().zip(pts) {
            assert!((a - b).abs() < 1e-9, "{out:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn refine_never_worsens(raw in proptest::collection::vec(-1.0..1.0f64, 4..7), wls in any::<bool>()) {
            let p = quadratic(0.6, 1.2);
            if let Ok(init) = ExactDesign::new(raw, &p.domain) {
                let est = if wls { Estimator::Wls } else { Estimator::Ols };
                let cfg = SimplexConfig { max_iter: 300, max_restarts: 0, ..SimplexConfig::default() };
                let before = design_criterion(&p, &init, est).unwrap();
                let (d, r) = refine_exact_design(&p, &init, est, &cfg).unwrap();
                let after = design_criterion(&p, &d, est).unwrap();
                prop_assert!(after <= before);
                prop_assert!((after - r.value).abs() <= 1e-12 * after);
                prop_assert!(d.points().iter().all(|t| p.domain.contains(*t)));
                prop_assert!(d.points().windows(2).all(|w| w[1] - w[0] >= p.domain.spacing_floor()));
            }
        }

        #[test]
        fn constant_shift_invariance(shift in -100.0..100.0f64, x0 in -3.0..3.0f64, y0 in -3.0..3.0f64) {
            let cfg = SimplexConfig::default();
            let f = |x: &[f64]| (x[0] - 0.5).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
            let a = nelder_mead(f, &[x0, y0], &cfg).unwrap();
            let b = nelder_mead(|x: &[f64]| f(x) + shift, &[x0, y0], &cfg).unwrap();
            prop_assert!((a.x[0] - b.x[0]).abs() < 1e-3 && (a.x[1] - b.x[1]).abs() < 1e-3);
            prop_assert!((a.value + shift - b.value).abs() < 1e-6);
        }
    }
}
