use rayon::prelude::*;
use serde::Serialize;

use super::{criterion_value, efficiency_from_values, estimator_covariance, ExactDesign};
use crate::error::{Error, Result};
use crate::optimize::{exact_optimal_design, SimplexConfig};
use crate::problem::{Estimator, PopulationProblem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityNode {
    /// Full parameter vector at this node.
    pub beta: Vec<f64>,
    /// Efficiency against the refined optimum at `beta`; `None` if that
    /// optimum could not be computed.
    pub efficiency: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityGrid {
    /// The two parameter indices (0-based) spanned by the grid.
    pub axes: (usize, usize),
    pub grid: (usize, usize),
    /// Row-major over the first axis, then the second.
    pub nodes: Vec<SensitivityNode>,
}

impl SensitivityGrid {
    /// Smallest efficiency over the nodes that were computed.
    pub fn min_efficiency(&self) -> Option<f64> {
        self.nodes.iter().filter_map(|n| n.efficiency).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta1,beta2,efficiency\n");
        for node in &self.nodes {
            let eff = node.efficiency.map(|e| e.to_string()).unwrap_or_else(|| "NaN".into());
            out.push_str(&format!(
                "{},{},{}\n",
                node.beta[self.axes.0], node.beta[self.axes.1], eff
            ));
        }
        out
    }
}

fn axis_values(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == m - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (m - 1) as f64
            }
        })
        .collect()
}

/// Efficiency of `design` over a grid of nominal parameters.
///
/// The grid spans `boxes[0]` on parameter `axes.0` and `boxes[1]` on
/// `axes.1`; the other coordinates stay at `beta0`. At every node the
/// reference is the refined exact optimum for that parameter (started from
/// `design` as well as the default starts), so efficiencies lie in (0, 1].
pub fn sensitivity_grid(
    design: &ExactDesign,
    problem: &PopulationProblem,
    axes: (usize, usize),
    boxes: [(f64, f64); 2],
    grid: (usize, usize),
    estimator: Estimator,
    config: &SimplexConfig,
) -> Result<SensitivityGrid> {
    let p = problem.p();
    if axes.0 >= p || axes.1 >= p || axes.0 == axes.1 {
        return Err(Error::Validation(format!("invalid axis pair {axes:?} for p = {p}")));
    }
    if grid.0 < 2 || grid.1 < 2 {
        return Err(Error::Validation(format!(
            "grid needs at least 2 nodes per axis, got {grid:?}"
        )));
    }
    for (lo, hi) in boxes {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Validation(format!("invalid box interval [{lo}, {hi}]")));
        }
    }
    super::check_design(problem, design)?;
    let xs = axis_values(boxes[0].0, boxes[0].1, grid.0);
    let ys = axis_values(boxes[1].0, boxes[1].1, grid.1);
    let betas: Vec<Vec<f64>> = xs
        .iter()
        .flat_map(|&x| {
            ys.iter().map(move |&y| {
                let mut b = problem.beta0().to_vec();
                b[axes.0] = x;
                b[axes.1] = y;
                b
            })
        })
        .collect();
    let nodes = betas
        .into_par_iter()
        .map(
            |beta| match node_efficiency(design, problem, &beta, estimator, config) {
                Ok(e) => SensitivityNode {
                    beta,
                    efficiency: Some(e),
                    error: None,
                },
                Err(e) => SensitivityNode {
                    beta,
                    efficiency: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect();
    Ok(SensitivityGrid { axes, grid, nodes })
}

fn node_efficiency(
    design: &ExactDesign,
    problem: &PopulationProblem,
    beta: &[f64],
    estimator: Estimator,
    config: &SimplexConfig,
) -> Result<f64> {
    let local = problem.with_beta0(beta.to_vec())?;
    let crit = local.resolved_criterion()?;
    let value = criterion_value(&estimator_covariance(&local, design, estimator)?.matrix, &crit);
    let (_, opt) = exact_optimal_design(&local, design.n(), estimator, std::slice::from_ref(design), config)?;
    Ok(efficiency_from_values(value, opt.value, &crit, local.p()))
}
