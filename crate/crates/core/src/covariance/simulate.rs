use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{check_design, design_matrix, error_covariance, gram_inverse, ExactDesign};
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::problem::PopulationProblem;

/// Monte-Carlo covariance of the per-subject OLS estimate.
///
/// Draws `b_i ~ N(beta0, V_p)` and `eps_i ~ N(0, V_eps)`, forms
/// `Y_i = G b_i + eps_i` (the linearized model, `G` the raw gradient rows),
/// estimates `beta_i = (X^T X)^{-1} X^T H^{-1} Y_i` with `X = H^{-1} G` and
/// returns the empirical covariance of the `k` estimates. Replicate `i` uses
/// its own ChaCha stream, so the result does not depend on thread count.
pub fn simulate_ols_covariance(
    problem: &PopulationProblem,
    design: &ExactDesign,
    k: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 replicates, got {k}")));
    }
    check_design(problem, design)?;
    let p = problem.p();
    let n = design.n();
    let beta0 = problem.beta0();
    let x = design_matrix(design, &problem.model, &problem.noise, beta0)?;
    let (gi, _) = gram_inverse(&x)?;
    let h: Vec<f64> = design.points().iter().map(|&t| problem.noise.h(t)).collect();
    // estimator acting on raw responses: (X^T X)^{-1} X^T H^{-1}
    let mut a = &gi * x.transpose();
    for (j, hj) in h.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / hj);
    }
    let mut g = x.clone();
    for (j, hj) in h.iter().enumerate() {
        g.row_mut(j).scale_mut(*hj);
    }
    let l_p = psd_sqrt(&problem.population.vp);
    let l_eps = psd_sqrt(&error_covariance(design, &problem.noise, &problem.corr));
    let beta0 = DVector::from_column_slice(beta0);

    let estimates: Vec<DVector<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let z_p = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let z_e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let b = &beta0 + &l_p * z_p;
            let y = &g * b + &l_eps * z_e;
            &a * y
        })
        .collect();

    // shifted accumulation around the first estimate
    let origin = estimates[0].clone();
    let mut shift_sum = DVector::zeros(p);
    let mut cross = DMatrix::zeros(p, p);
    for e in &estimates {
        let d = e - &origin;
        cross += &d * d.transpose();
        shift_sum += d;
    }
    let cov = (cross - &shift_sum * shift_sum.transpose() / k as f64) / (k - 1) as f64;
    Ok(cov)
}
