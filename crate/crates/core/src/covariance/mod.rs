//! Finite-design machinery: design matrix, error covariance, OLS and WLS
//! estimator covariances, criterion values and efficiencies.

mod sensitivity;
mod simulate;

pub use sensitivity::{sensitivity_grid, SensitivityGrid, SensitivityNode};
pub use simulate::simulate_ols_covariance;

use nalgebra::DMatrix;

use crate::correlation::{rho, CorrelationSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, CONDITION_SINGULAR, CONDITION_WARNING};
use crate::model::{regression_vector_into, ModelSpec, NoiseSpec};
use crate::problem::{Domain, Estimator, PopulationProblem, ResolvedCriterion};

/// Ordered sampling times shared by all subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDesign {
    points: Vec<f64>,
}

impl ExactDesign {
    /// Sorts `points` and checks they lie in `domain` with spacing at least
    /// `domain.spacing_floor()`.
    pub fn new(mut points: Vec<f64>, domain: &Domain) -> Result<ExactDesign> {
        if points.is_empty() {
            return Err(Error::Validation("design has no points".into()));
        }
        if let Some(t) = points.iter().find(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("non-finite design point {t}")));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some(t) = points.iter().find(|t| !domain.contains(**t)) {
            return Err(Error::Validation(format!(
                "design point {t} outside [{}, {}]",
                domain.lo, domain.hi
            )));
        }
        let floor = domain.spacing_floor();
        for w in points.windows(2) {
            if w[1] - w[0] < floor {
                return Err(Error::Validation(format!(
                    "design points {} and {} are closer than {floor:e}",
                    w[0], w[1]
                )));
            }
        }
        Ok(ExactDesign { points })
    }

    /// Equally spaced design `lo, lo + d, ..., hi` with n points.
    pub fn equidistant(domain: &Domain, n: usize) -> Result<ExactDesign> {
        if n < 2 {
            return Err(Error::Validation("equidistant design needs n >= 2".into()));
        }
        let pts = (0..n)
            .map(|i| domain.lo + domain.width() * i as f64 / (n - 1) as f64)
            .collect();
        ExactDesign::new(pts, domain)
    }

    /// Points `lo + j |T| / (n + 1)`, j = 1..n, excluding both ends.
    pub fn uniform_interior(domain: &Domain, n: usize) -> Result<ExactDesign> {
        let pts = (1..=n)
            .map(|j| domain.lo + domain.width() * j as f64 / (n + 1) as f64)
            .collect();
        ExactDesign::new(pts, domain)
    }

    /// Points `lo + j |T| / n`, j = 1..n: equally spaced, excluding `lo`.
    pub fn equidistant_right(domain: &Domain, n: usize) -> Result<ExactDesign> {
        let pts = (1..=n)
            .map(|j| {
                if j == n {
                    domain.hi
                } else {
                    domain.lo + domain.width() * j as f64 / n as f64
                }
            })
            .collect();
        ExactDesign::new(pts, domain)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }
}

/// An estimator covariance together with the worst condition number met
/// while computing it.
#[derive(Debug, Clone)]
pub struct Covariance {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
}

impl Covariance {
    pub fn ill_conditioned(&self) -> bool {
        self.condition > CONDITION_WARNING
    }

    pub fn warning(&self) -> Option<String> {
        self.ill_conditioned()
            .then(|| format!("condition number estimate {:.3e} exceeds 1e12", self.condition))
    }
}

/// `X` with rows `f(t_j) = grad(t_j, beta0) / h(t_j)`.
pub fn design_matrix(
    design: &ExactDesign,
    model: &ModelSpec,
    noise: &NoiseSpec,
    beta0: &[f64],
) -> Result<DMatrix<f64>> {
    design_matrix_from_points(design.points(), model, noise, beta0)
}

pub(crate) fn design_matrix_from_points(
    points: &[f64],
    model: &ModelSpec,
    noise: &NoiseSpec,
    beta0: &[f64],
) -> Result<DMatrix<f64>> {
    let p = model.p();
    let mut x = DMatrix::zeros(points.len(), p);
    let mut row = vec![0.0; p];
    for (j, &t) in points.iter().enumerate() {
        regression_vector_into(model, noise, t, beta0, &mut row)?;
        for k in 0..p {
            x[(j, k)] = row[k];
        }
    }
    Ok(x)
}

/// `(V_eps)_{js} = sigma^2 h(t_j) h(t_s) (gamma r(t_j - t_s) + (1 - gamma) delta_js)`
/// with `r(dt) = rho(scale |dt|)` and scale defaulting to the design size.
pub fn error_covariance(design: &ExactDesign, noise: &NoiseSpec, corr: &CorrelationSpec) -> DMatrix<f64> {
    let h: Vec<f64> = design.points().iter().map(|&t| noise.h(t)).collect();
    let mut v = standardized_from_points(design.points(), noise.sigma2, corr);
    let n = design.n();
    for j in 0..n {
        for s in 0..n {
            v[(j, s)] *= h[j] * h[s];
        }
    }
    v
}

/// `H^{-1} V_eps H^{-1}`: the error covariance of the `h`-standardized
/// responses, which is what enters the OLS/WLS sandwich with `X = G / h`.
pub fn standardized_error_covariance(design: &ExactDesign, noise: &NoiseSpec, corr: &CorrelationSpec) -> DMatrix<f64> {
    standardized_from_points(design.points(), noise.sigma2, corr)
}

pub(crate) fn standardized_from_points(points: &[f64], sigma2: f64, corr: &CorrelationSpec) -> DMatrix<f64> {
    let n = points.len();
    let scale = corr.scale_for(n);
    let gamma = corr.gamma;
    let mut v = DMatrix::zeros(n, n);
    for j in 0..n {
        v[(j, j)] = sigma2;
        for s in (j + 1)..n {
            let c = sigma2 * gamma * rho(corr, scale * (points[j] - points[s]));
            v[(j, s)] = c;
            v[(s, j)] = c;
        }
    }
    v
}

fn gram_inverse(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let gram = x.transpose() * x;
    match linalg::spd_inverse(&gram) {
        Some((inv, cond)) if cond < CONDITION_SINGULAR => Ok((inv, cond)),
        _ => Err(Error::SingularDesign(format!(
            "X^T X is rank deficient ({} points, p = {})",
            x.nrows(),
            x.ncols()
        ))),
    }
}

/// `(X^T X)^{-1} X^T V_eps X (X^T X)^{-1} + V_p`.
pub fn ols_covariance(x: &DMatrix<f64>, veps: &DMatrix<f64>, vp: &DMatrix<f64>) -> Result<Covariance> {
    let (gi, cond) = gram_inverse(x)?;
    let a = &gi * x.transpose();
    let mut m = &a * veps * a.transpose() + vp;
    linalg::symmetrize(&mut m);
    Ok(Covariance {
        matrix: m,
        condition: cond,
    })
}

/// `(X^T (V_eps + X V_p X^T)^{-1} X)^{-1}`.
pub fn wls_covariance(x: &DMatrix<f64>, veps: &DMatrix<f64>, vp: &DMatrix<f64>) -> Result<Covariance> {
    let mut s = veps + x * vp * x.transpose();
    linalg::symmetrize(&mut s);
    let (s_inv, cond_s) = linalg::spd_inverse_or_err(&s, "combined covariance V_eps + X V_p X^T")?;
    let info = x.transpose() * s_inv * x;
    let (m, cond_i) = linalg::spd_inverse(&info).ok_or_else(|| Error::Numerical {
        message: "weighted information matrix is singular".into(),
        condition: linalg::condition_number(&info),
    })?;
    Ok(Covariance {
        matrix: m,
        condition: cond_s.max(cond_i),
    })
}

/// `det M` for D, `c^T M c` for c-type criteria. Lower is better.
pub fn criterion_value(m: &DMatrix<f64>, crit: &ResolvedCriterion) -> f64 {
    match crit {
        ResolvedCriterion::D => m.determinant(),
        ResolvedCriterion::C(c) => (c.transpose() * m * c)[(0, 0)],
    }
}

/// Checks that `design` can be evaluated for `problem`.
pub fn check_design(problem: &PopulationProblem, design: &ExactDesign) -> Result<()> {
    let d = &problem.domain;
    if design.n() < problem.p() {
        return Err(Error::Validation(format!(
            "design has {} points but the model has p = {}",
            design.n(),
            problem.p()
        )));
    }
    if let Some(t) = design.points().iter().find(|t| !d.contains(**t)) {
        return Err(Error::Validation(format!(
            "design point {t} outside [{}, {}]",
            d.lo, d.hi
        )));
    }
    Ok(())
}

/// Estimator covariance of `design` under `problem` (K = 1).
pub fn estimator_covariance(
    problem: &PopulationProblem,
    design: &ExactDesign,
    estimator: Estimator,
) -> Result<Covariance> {
    check_design(problem, design)?;
    covariance_from_points(problem, design.points(), estimator)
}

pub(crate) fn covariance_from_points(
    problem: &PopulationProblem,
    points: &[f64],
    estimator: Estimator,
) -> Result<Covariance> {
    let x = design_matrix_from_points(points, &problem.model, &problem.noise, problem.beta0())?;
    let veps = standardized_from_points(points, problem.noise.sigma2, &problem.corr);
    match estimator {
        Estimator::Ols => ols_covariance(&x, &veps, &problem.population.vp),
        Estimator::Wls => wls_covariance(&x, &veps, &problem.population.vp),
    }
}

/// Criterion value of `design`.
pub fn design_criterion(problem: &PopulationProblem, design: &ExactDesign, estimator: Estimator) -> Result<f64> {
    let crit = problem.resolved_criterion()?;
    let m = estimator_covariance(problem, design, estimator)?;
    Ok(criterion_value(&m.matrix, &crit))
}

/// Efficiency of `design` relative to `reference`:
/// `(det M_ref / det M_design)^(1/p)` for D, `c^T M_ref c / c^T M_design c`
/// otherwise. At most one when the reference is optimal.
pub fn efficiency(
    design: &ExactDesign,
    reference: &ExactDesign,
    problem: &PopulationProblem,
    estimator: Estimator,
) -> Result<f64> {
    let crit = problem.resolved_criterion()?;
    let m_design = estimator_covariance(problem, design, estimator)?;
    let m_ref = estimator_covariance(problem, reference, estimator)?;
    Ok(efficiency_from_values(
        criterion_value(&m_design.matrix, &crit),
        criterion_value(&m_ref.matrix, &crit),
        &crit,
        problem.p(),
    ))
}

pub(crate) fn efficiency_from_values(design: f64, reference: f64, crit: &ResolvedCriterion, p: usize) -> f64 {
    let ratio = reference / design;
    if crit.is_determinant() {
        ratio.powf(1.0 / p as f64)
    } else {
        ratio
    }
}
