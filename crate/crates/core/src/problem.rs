//! The population design problem: model, noise, correlation, population
//! distribution, design interval and optimality criterion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{auc_gradient, ModelSpec, NoiseSpec};

/// The design interval `T = [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Domain> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("domain", format!("need t_lo < t_hi, got [{lo}, {hi}]")));
        }
        Ok(Domain { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    /// Minimal admissible spacing between design points.
    pub fn spacing_floor(&self) -> f64 {
        1e-6 * self.width()
    }
}

/// Mean and covariance of the random effects.
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    pub beta0: Vec<f64>,
    pub vp: DMatrix<f64>,
}

impl PopulationSpec {
    /// Validates symmetry (1e-12) and positive semidefiniteness; eigenvalues
    /// in `[-1e-10, 0)` are clipped to zero.
    pub fn new(beta0: Vec<f64>, vp: DMatrix<f64>) -> Result<PopulationSpec> {
        let p = beta0.len();
        if vp.nrows() != p || vp.ncols() != p {
            return Err(Error::config(
                "population.vp",
                format!("expected {p}x{p}, got {}x{}", vp.nrows(), vp.ncols()),
            ));
        }
        if vp.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("population.vp", "entries must be finite"));
        }
        for i in 0..p {
            for j in 0..i {
                if (vp[(i, j)] - vp[(j, i)]).abs() > 1e-12 {
                    return Err(Error::config("population.vp", "matrix is not symmetric"));
                }
            }
        }
        let mut vp = vp;
        linalg::symmetrize(&mut vp);
        let min = if p > 0 { linalg::min_eigenvalue(&vp) } else { 0.0 };
        if min < -1e-10 {
            return Err(Error::config(
                "population.vp",
                format!("matrix is not positive semidefinite (eigenvalue {min:e})"),
            ));
        }
        if min < 0.0 {
            vp = linalg::clip_psd(&vp);
        }
        Ok(PopulationSpec { beta0, vp })
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }
}

/// Optimality criterion as configured.
#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// Determinant of the estimator covariance.
    D,
    /// `c^T M c` for a fixed vector.
    C(Vec<f64>),
    /// `c^T M c` with `c` the gradient of the AUC at the nominal parameters.
    Auc,
}

/// Criterion with the c-vector evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedCriterion {
    D,
    C(DVector<f64>),
}

impl ResolvedCriterion {
    pub fn is_determinant(&self) -> bool {
        matches!(self, ResolvedCriterion::D)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimator {
    Ols,
    Wls,
}

/// Everything needed to evaluate a design.
#[derive(Debug, Clone)]
pub struct PopulationProblem {
    pub model: ModelSpec,
    pub noise: NoiseSpec,
    pub corr: CorrelationSpec,
    pub population: PopulationSpec,
    pub domain: Domain,
    pub criterion: Criterion,
}

impl PopulationProblem {
    pub fn new(
        model: ModelSpec,
        noise: NoiseSpec,
        corr: CorrelationSpec,
        population: PopulationSpec,
        domain: Domain,
        criterion: Criterion,
    ) -> Result<PopulationProblem> {
        let p = model.p();
        if population.p() != p {
            return Err(Error::config(
                "model.beta0",
                format!("model has p = {p} but beta0 has {} entries", population.p()),
            ));
        }
        model
            .validate(domain.lo, domain.hi, &population.beta0)
            .map_err(|e| match e {
                Error::Config { .. } => e,
                other => Error::config("model.beta0", other.to_string()),
            })?;
        noise.validate(domain.lo, domain.hi)?;
        if let Criterion::C(c) = &criterion {
            if c.len() != p {
                return Err(Error::config(
                    "criterion.c",
                    format!("expected {p} entries, got {}", c.len()),
                ));
            }
            if c.iter().all(|v| *v == 0.0) {
                return Err(Error::config("criterion.c", "c must be nonzero"));
            }
        }
        let problem = PopulationProblem {
            model,
            noise,
            corr,
            population,
            domain,
            criterion,
        };
        if let Criterion::Auc = problem.criterion {
            problem
                .resolved_criterion()
                .map_err(|e| Error::config("criterion.type", e.to_string()))?;
        }
        Ok(problem)
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn beta0(&self) -> &[f64] {
        &self.population.beta0
    }

    pub fn resolved_criterion(&self) -> Result<ResolvedCriterion> {
        match &self.criterion {
            Criterion::D => Ok(ResolvedCriterion::D),
            Criterion::C(c) => Ok(ResolvedCriterion::C(DVector::from_column_slice(c))),
            Criterion::Auc => {
                let c = auc_gradient(&self.model, self.beta0())?;
                Ok(ResolvedCriterion::C(DVector::from_vec(c)))
            }
        }
    }

    /// The same problem at a different nominal parameter.
    pub fn with_beta0(&self, beta0: Vec<f64>) -> Result<PopulationProblem> {
        self.model.check_params(&beta0)?;
        let mut out = self.clone();
        out.population.beta0 = beta0;
        Ok(out)
    }

    pub fn with_corr(&self, corr: CorrelationSpec) -> PopulationProblem {
        let mut out = self.clone();
        out.corr = corr;
        out
    }
}
