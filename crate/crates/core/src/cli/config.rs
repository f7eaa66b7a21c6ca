//! JSON problem configuration and its conversion into a validated problem.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationSpec, Kernel};
use crate::covariance::ExactDesign;
use crate::density::{DesignRule, QuadratureSpec};
use crate::error::{Error, Result};
use crate::model::{builtin_model, parse_model_expression, Expr, ModelSpec, NoiseSpec};
use crate::problem::{Criterion, Domain, Estimator, PopulationProblem, PopulationSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub model: ModelConfig,
    pub domain: [f64; 2],
    pub noise: NoiseConfig,
    pub correlation: CorrelationConfig,
    pub population: PopulationConfig,
    pub criterion: CriterionConfig,
    #[serde(default)]
    pub density: DensityConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub refine: RefineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Degree of the `polynomial` builtin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    pub beta0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Exponential,
    Gaussian,
    Table,
}

fn default_kernel() -> KernelName {
    KernelName::Exponential
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    #[serde(default = "default_kernel")]
    pub kernel: KernelName,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// `(t, rho)` knots of the `table` kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    /// Rows of the random-effect covariance.
    #[serde(alias = "Vp")]
    pub vp: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionType {
    D,
    #[serde(alias = "C")]
    #[serde(rename = "c")]
    C,
    #[serde(rename = "AUC", alias = "auc")]
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    #[serde(rename = "type")]
    pub kind: CriterionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub degree: usize,
    pub restarts: usize,
    pub quad_nodes: usize,
    pub seed: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            degree: 6,
            restarts: 8,
            quad_nodes: 201,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub n: usize,
    pub rule: DesignRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub enabled: bool,
    pub estimator: Estimator,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            enabled: true,
            estimator: Estimator::Ols,
        }
    }
}

/// A configuration turned into checked library objects.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProblemConfig,
    pub problem: PopulationProblem,
    pub quad: QuadratureSpec,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a design file: a JSON array of sampling times.
pub fn read_design(path: &Path, domain: &Domain) -> Result<ExactDesign> {
    let points: Vec<f64> = read_json(path)?;
    ExactDesign::new(points, domain)
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<ProblemConfig> {
        read_json(path)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        match (&m.name, &m.expression) {
            (Some(_), Some(_)) => Err(Error::config("model", "give either `name` or `expression`, not both")),
            (None, None) => Err(Error::config("model", "missing `name` or `expression`")),
            (Some(name), None) => {
                let spec = builtin_model(name, m.degree).map_err(|e| match e {
                    Error::Config { .. } => e,
                    other => Error::config("model.name", other.to_string()),
                })?;
                if let Some(p) = m.p {
                    if p != spec.p() {
                        return Err(Error::config(
                            "model.p",
                            format!("model `{name}` has p = {}, config says {p}", spec.p()),
                        ));
                    }
                }
                Ok(spec)
            }
            (None, Some(text)) => {
                let p = m.p.unwrap_or(m.beta0.len());
                parse_model_expression(text, p).map_err(|e| Error::config("model.expression", e.to_string()))
            }
        }
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let h = match &self.noise.h {
            None => None,
            Some(text) => {
                let expr = Expr::parse(text).map_err(|e| Error::config("noise.h", e.to_string()))?;
                if expr.max_param() > 0 {
                    return Err(Error::config("noise.h", "h(t) may depend on t only"));
                }
                Some(expr)
            }
        };
        NoiseSpec::new_allow_zero(self.noise.sigma2, h).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("noise.sigma2", other.to_string()),
        })
    }

    pub fn correlation_spec(&self) -> Result<CorrelationSpec> {
        let c = &self.correlation;
        let kernel = match c.kernel {
            KernelName::Exponential => Kernel::Exponential,
            KernelName::Gaussian => Kernel::Gaussian,
            KernelName::Table => {
                let knots = c
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::config("correlation.table", "required for the table kernel"))?;
                Kernel::Table(knots.iter().map(|k| (k[0], k[1])).collect())
            }
        };
        CorrelationSpec::new(kernel, c.gamma, c.lambda, c.scale)
    }

    pub fn population_spec(&self, p: usize) -> Result<PopulationSpec> {
        let rows = &self.population.vp;
        if rows.len() != p || rows.iter().any(|r| r.len() != p) {
            return Err(Error::config("population.vp", format!("expected a {p}x{p} matrix")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        PopulationSpec::new(self.model.beta0.clone(), DMatrix::from_row_slice(p, p, &flat))
    }

    pub fn criterion(&self) -> Result<Criterion> {
        let c = &self.criterion;
        match c.kind {
            CriterionType::D => Ok(Criterion::D),
            CriterionType::Auc => Ok(Criterion::Auc),
            CriterionType::C => {
                c.c.clone()
                    .map(Criterion::C)
                    .ok_or_else(|| Error::config("criterion.c", "required for type `c`"))
            }
        }
    }

    /// Validates everything and builds the problem.
    pub fn resolve(&self) -> Result<LoadedConfig> {
        let model = self.model_spec()?;
        let p = model.p();
        if self.model.beta0.len() != p {
            return Err(Error::config(
                "model.beta0",
                format!("model has p = {p} but beta0 has {} entries", self.model.beta0.len()),
            ));
        }
        if self.model.beta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("model.beta0", "entries must be finite"));
        }
        model
            .check_params(&self.model.beta0)
            .map_err(|e| Error::config("model.beta0", e.to_string()))?;
        let domain = Domain::new(self.domain[0], self.domain[1])?;
        let noise = self.noise_spec()?;
        let corr = self.correlation_spec()?;
        let population = self.population_spec(p)?;
        let criterion = self.criterion()?;
        let quad = QuadratureSpec::new(self.density.quad_nodes)?;
        if self.density.restarts < 1 {
            return Err(Error::config("density.restarts", "must be at least 1"));
        }
        let min_n = match self.design.rule {
            DesignRule::Endpoints => p.max(2),
            DesignRule::Interior => p.max(1),
        };
        if self.design.n < min_n {
            return Err(Error::config(
                "design.n",
                format!(
                    "need at least {min_n} points for p = {p} and the {:?} rule",
                    self.design.rule
                ),
            ));
        }
        let problem = PopulationProblem::new(model, noise, corr, population, domain, criterion)?;
        Ok(LoadedConfig {
            config: self.clone(),
            problem,
            quad,
        })
    }
}
