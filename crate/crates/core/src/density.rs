//! Polynomial design densities, Simpson quadrature, the asymptotic
//! covariance `V(phi)` and quantile-based design extraction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlation::{q_function, CorrelationSpec};
use crate::covariance::ExactDesign;
use crate::error::{Error, Result};
use crate::linalg::{self, CONDITION_SINGULAR};
use crate::model::{regression_vector_into, ModelSpec, NoiseSpec};
use crate::problem::{Domain, PopulationProblem};

/// Densities at or below this value contribute nothing to `R(phi)`.
pub const PHI_FLOOR: f64 = 1e-12;
/// Arguments of `Q(1/phi)` above this cap are treated as `Q = 0`.
pub const Q_ARG_CAP: f64 = 1e12;
/// Normalizing constants below this are degenerate.
pub const NORM_FLOOR: f64 = 1e-12;

/// Composite Simpson rule on a uniform grid of an odd number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { nodes: 201 }
    }
}

impl QuadratureSpec {
    pub fn new(nodes: usize) -> Result<QuadratureSpec> {
        if nodes < 3 || nodes.is_multiple_of(2) {
            return Err(Error::config(
                "density.quad_nodes",
                format!("must be odd and at least 3, got {nodes}"),
            ));
        }
        Ok(QuadratureSpec { nodes })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn grid(&self, domain: &Domain) -> Vec<f64> {
        let n = self.nodes;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    domain.hi
                } else {
                    domain.lo + domain.width() * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    pub fn weights(&self, domain: &Domain) -> Vec<f64> {
        let n = self.nodes;
        let h = domain.width() / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect()
    }
}

/// Polynomial `sum_k c_k ((t - center) / half_width)^k`.
#[derive(Debug, Clone, PartialEq)]
struct Poly {
    coeffs: Vec<f64>,
    center: f64,
    half_width: f64,
}

impl Poly {
    fn eval(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.half_width;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    fn positive(&self, t: f64) -> f64 {
        self.eval(t).max(0.0)
    }

    /// Coefficients of the same polynomial in powers of `t`.
    fn monomial_coeffs(&self) -> Vec<f64> {
        let r = self.coeffs.len();
        let mut out = vec![0.0; r];
        let inv = 1.0 / self.half_width;
        for (k, &ck) in self.coeffs.iter().enumerate() {
            // c_k h^{-k} (t - center)^k
            let scale = ck * inv.powi(k as i32);
            let mut binom = 1.0;
            for i in 0..=k {
                out[i] += scale * binom * (-self.center).powi((k - i) as i32);
                binom = binom * (k - i) as f64 / (i + 1) as f64;
            }
        }
        out
    }
}

/// Normalized positive part of a polynomial on `T`, with a cumulative table
/// for CDF and quantile evaluation.
#[derive(Debug, Clone)]
pub struct PolyDensity {
    poly: Poly,
    domain: Domain,
    quad: QuadratureSpec,
    norm: f64,
    grid: Vec<f64>,
    /// Positive part of the polynomial at the grid nodes (unnormalized).
    values: Vec<f64>,
    cdf_table: Vec<f64>,
}

/// Normalizes the positive part of `p0 + p1 t + ... + pr t^r` on `domain`.
pub fn normalize_density(coeffs: &[f64], domain: &Domain, quad: &QuadratureSpec) -> Result<PolyDensity> {
    PolyDensity::build(
        Poly {
            coeffs: coeffs.to_vec(),
            center: 0.0,
            half_width: 1.0,
        },
        domain,
        quad,
    )
}

impl PolyDensity {
    /// Density from coefficients in the centered variable
    /// `u = (2t - lo - hi) / (hi - lo)` on `[-1, 1]`.
    pub fn from_centered(coeffs: &[f64], domain: &Domain, quad: &QuadratureSpec) -> Result<PolyDensity> {
        PolyDensity::build(
            Poly {
                coeffs: coeffs.to_vec(),
                center: 0.5 * (domain.lo + domain.hi),
                half_width: 0.5 * domain.width(),
            },
            domain,
            quad,
        )
    }

    pub fn uniform(domain: &Domain, quad: &QuadratureSpec) -> PolyDensity {
        Self::from_centered(&[1.0], domain, quad).expect("uniform density is never degenerate")
    }

    fn build(poly: Poly, domain: &Domain, quad: &QuadratureSpec) -> Result<PolyDensity> {
        if poly.coeffs.is_empty() || poly.coeffs.iter().all(|c| *c == 0.0) {
            return Err(Error::DegenerateDensity("all coefficients are zero".into()));
        }
        if poly.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateDensity("non-finite coefficient".into()));
        }
        let grid = quad.grid(domain);
        let weights = quad.weights(domain);
        let values: Vec<f64> = grid.iter().map(|&t| poly.positive(t)).collect();
        let norm: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
        if !(norm >= NORM_FLOOR) {
            return Err(Error::DegenerateDensity(format!("normalizing constant {norm:e}")));
        }
        // per-cell Simpson with the midpoint: nonnegative increments keep the
        // table monotone even across kinks of the positive part
        let mut cdf_table = Vec::with_capacity(grid.len());
        cdf_table.push(0.0);
        let mut acc = 0.0;
        for i in 0..grid.len() - 1 {
            let (a, b) = (grid[i], grid[i + 1]);
            let mid = poly.positive(0.5 * (a + b));
            acc += (b - a) / 6.0 * (values[i] + 4.0 * mid + values[i + 1]);
            cdf_table.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::DegenerateDensity("cumulative mass is zero".into()));
        }
        for c in cdf_table.iter_mut() {
            *c /= acc;
        }
        *cdf_table.last_mut().unwrap() = 1.0;
        Ok(PolyDensity {
            poly,
            domain: *domain,
            quad: *quad,
            norm,
            grid,
            values,
            cdf_table,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    /// `int_T (poly)_+ dt` by Simpson's rule.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Coefficients in powers of `t`.
    pub fn coeffs(&self) -> Vec<f64> {
        self.poly.monomial_coeffs()
    }

    /// Coefficients in the centered variable on `[-1, 1]`.
    pub fn centered_coeffs(&self) -> Vec<f64> {
        if self.poly.center == 0.0 && self.poly.half_width == 1.0 {
            // re-express a raw polynomial on the centered variable
            let c = 0.5 * (self.domain.lo + self.domain.hi);
            let h = 0.5 * self.domain.width();
            let r = self.poly.coeffs.len();
            let mut out = vec![0.0; r];
            // t = c + h u
            for (k, &ak) in self.poly.coeffs.iter().enumerate() {
                let mut binom = 1.0;
                for i in 0..=k {
                    out[i] += ak * binom * h.powi(i as i32) * c.powi((k - i) as i32);
                    binom = binom * (k - i) as f64 / (i + 1) as f64;
                }
            }
            out
        } else {
            self.poly.coeffs.clone()
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Density values `phi(t_i)` at the quadrature nodes.
    pub fn grid_density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / self.norm).collect()
    }

    pub fn cdf_table(&self) -> &[f64] {
        &self.cdf_table
    }

    /// `phi(t)`; zero outside `T`.
    pub fn eval_density(&self, t: f64) -> f64 {
        if !self.domain.contains(t) {
            return 0.0;
        }
        self.poly.positive(t) / self.norm
    }

    /// `Phi(t)`, piecewise linear between the cumulative table nodes.
    pub fn eval_cdf(&self, t: f64) -> f64 {
        if t <= self.domain.lo {
            return 0.0;
        }
        if t >= self.domain.hi {
            return 1.0;
        }
        let i = self.grid.partition_point(|&g| g <= t).clamp(1, self.grid.len() - 1);
        let (a, b) = (self.grid[i - 1], self.grid[i]);
        let (ca, cb) = (self.cdf_table[i - 1], self.cdf_table[i]);
        ca + (cb - ca) * (t - a) / (b - a)
    }

    /// Smallest `t` with `Phi(t) >= u`; `quantile(0) = lo`, `quantile(1) = hi`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0, 1]")));
        }
        if u == 0.0 {
            return Ok(self.domain.lo);
        }
        if u == 1.0 {
            return Ok(self.domain.hi);
        }
        // bisection over the monotone table
        let j = self.cdf_table.partition_point(|&c| c < u);
        let (ca, cb) = (self.cdf_table[j - 1], self.cdf_table[j]);
        let (a, b) = (self.grid[j - 1], self.grid[j]);
        Ok(a + (b - a) * (u - ca) / (cb - ca))
    }

    /// Smallest and largest grid nodes bounding the positive mass.
    pub fn support(&self) -> (f64, f64) {
        let first = self.cdf_table.iter().position(|&c| c > 0.0).unwrap_or(1);
        let last = self
            .cdf_table
            .iter()
            .position(|&c| c >= 1.0)
            .unwrap_or(self.grid.len() - 1);
        (self.grid[first - 1], self.grid[last])
    }
}

/// Regression vectors `f(t_i)` at the quadrature nodes and Simpson weights;
/// independent of the density, so computed once per problem.
#[derive(Debug, Clone)]
pub struct AsymptoticWorkspace {
    pub(crate) grid: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    f_rows: Vec<Vec<f64>>,
    p: usize,
}

impl AsymptoticWorkspace {
    pub fn new(
        model: &ModelSpec,
        noise: &NoiseSpec,
        beta0: &[f64],
        domain: &Domain,
        quad: &QuadratureSpec,
    ) -> Result<AsymptoticWorkspace> {
        let grid = quad.grid(domain);
        let weights = quad.weights(domain);
        let p = model.p();
        let mut f_rows = Vec::with_capacity(grid.len());
        for &t in &grid {
            let mut row = vec![0.0; p];
            regression_vector_into(model, noise, t, beta0, &mut row)?;
            f_rows.push(row);
        }
        Ok(AsymptoticWorkspace {
            grid,
            weights,
            f_rows,
            p,
        })
    }

    pub fn for_problem(problem: &PopulationProblem, quad: &QuadratureSpec) -> Result<AsymptoticWorkspace> {
        Self::new(&problem.model, &problem.noise, problem.beta0(), &problem.domain, quad)
    }

    /// `W = int f f^T phi` from density values at the nodes.
    pub fn moment_matrix(&self, phi: &[f64]) -> DMatrix<f64> {
        self.weighted_gram(phi.iter().zip(&self.weights).map(|(p, w)| p * w))
    }

    /// `R = int f f^T Q(1/phi) phi`.
    pub fn correlation_matrix(&self, phi: &[f64], corr: &CorrelationSpec) -> Result<DMatrix<f64>> {
        let mut mass = Vec::with_capacity(phi.len());
        for (&ph, &w) in phi.iter().zip(&self.weights) {
            mass.push(if ph <= PHI_FLOOR || 1.0 / ph > Q_ARG_CAP {
                0.0
            } else {
                w * ph * q_function(corr, 1.0 / ph)?
            });
        }
        Ok(self.weighted_gram(mass.into_iter()))
    }

    fn weighted_gram(&self, mass: impl Iterator<Item = f64>) -> DMatrix<f64> {
        let p = self.p;
        let mut m = DMatrix::zeros(p, p);
        for (row, c) in self.f_rows.iter().zip(mass) {
            if c == 0.0 {
                continue;
            }
            for i in 0..p {
                let ci = c * row[i];
                for j in i..p {
                    m[(i, j)] += ci * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        m
    }

    /// `V(phi) = sigma^2 (W^{-1} + 2 gamma W^{-1} R W^{-1})`.
    pub fn asymptotic_covariance(&self, phi: &[f64], sigma2: f64, corr: &CorrelationSpec) -> Result<DMatrix<f64>> {
        let w = self.moment_matrix(phi);
        let wi = match linalg::spd_inverse(&w) {
            Some((wi, cond)) if cond < CONDITION_SINGULAR => wi,
            _ => return Err(Error::DegenerateDensity("moment matrix W is singular".into())),
        };
        let mut v = if corr.gamma == 0.0 {
            wi * sigma2
        } else {
            let r = self.correlation_matrix(phi, corr)?;
            (&wi + &wi * r * &wi * (2.0 * corr.gamma)) * sigma2
        };
        linalg::symmetrize(&mut v);
        Ok(v)
    }
}

fn workspace_for(
    phi: &PolyDensity,
    model: &ModelSpec,
    noise: &NoiseSpec,
    beta0: &[f64],
) -> Result<AsymptoticWorkspace> {
    AsymptoticWorkspace::new(model, noise, beta0, &phi.domain, &phi.quad)
}

/// `W_ij = int_T f_i f_j phi dt` on the density's quadrature grid.
pub fn moment_matrix_w(phi: &PolyDensity, model: &ModelSpec, noise: &NoiseSpec, beta0: &[f64]) -> Result<DMatrix<f64>> {
    Ok(workspace_for(phi, model, noise, beta0)?.moment_matrix(&phi.grid_density()))
}

/// `R_ij = int_T f_i f_j Q(1/phi) phi dt`.
pub fn correlation_matrix_r(
    phi: &PolyDensity,
    model: &ModelSpec,
    noise: &NoiseSpec,
    beta0: &[f64],
    corr: &CorrelationSpec,
) -> Result<DMatrix<f64>> {
    workspace_for(phi, model, noise, beta0)?.correlation_matrix(&phi.grid_density(), corr)
}

/// `V(phi)`, the design-dependent part of the asymptotic OLS covariance
/// (scaled by n).
pub fn asymptotic_covariance_v(phi: &PolyDensity, problem: &PopulationProblem) -> Result<DMatrix<f64>> {
    let ws = workspace_for(phi, &problem.model, &problem.noise, problem.beta0())?;
    ws.asymptotic_covariance(&phi.grid_density(), problem.noise.sigma2, &problem.corr)
}

/// How quantile levels are assigned to the n design points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignRule {
    /// `u_i = (i - 1) / (n - 1)`, includes both ends of the support.
    Endpoints,
    /// `u_j = j / (n + 1)`, excludes both ends.
    Interior,
}

/// Exact design from the quantiles of `phi`.
pub fn design_from_density(phi: &PolyDensity, n: usize, rule: DesignRule) -> Result<ExactDesign> {
    let levels: Vec<f64> = match rule {
        DesignRule::Endpoints => {
            if n < 2 {
                return Err(Error::Validation("endpoints rule needs n >= 2".into()));
            }
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        }
        DesignRule::Interior => {
            if n < 1 {
                return Err(Error::Validation("interior rule needs n >= 1".into()));
            }
            (1..=n).map(|j| j as f64 / (n + 1) as f64).collect()
        }
    };
    let points = levels.iter().map(|&u| phi.quantile(u)).collect::<Result<Vec<f64>>>()?;
    let floor = phi.domain.spacing_floor();
    if points.windows(2).any(|w| w[1] - w[0] < floor) {
        return Err(Error::DegenerateDesign(format!(
            "quantile design has coincident points: {points:?}"
        )));
    }
    ExactDesign::new(points, &phi.domain)
}
