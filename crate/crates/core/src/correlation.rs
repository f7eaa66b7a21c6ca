//! Correlation kernels, the n-scaled within-subject correlation and the
//! series `Q(t) = sum_{j >= 1} rho(j t)`.

use crate::error::{Error, Result};

/// Relative truncation tolerance of the Q series.
pub const Q_SERIES_TOL: f64 = 1e-12;
/// Hard cap on the number of Q series terms.
pub const Q_SERIES_MAX_TERMS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `rho(t) = exp(-lambda t)`
    Exponential,
    /// `rho(t) = exp(-lambda t^2)`
    Gaussian,
    /// Piecewise-linear `rho(t) = table(lambda t)` through `(t, rho)` knots,
    /// starting at `(0, 1)` and ending at zero; zero beyond the last knot.
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    pub kernel: Kernel,
    /// Mixing weight between correlated and white noise, in `[0, 1]`.
    pub gamma: f64,
    /// Decay rate, positive.
    pub lambda: f64,
    /// The `n` of `r_n(t) = rho(n t)`. `None` means "size of the design
    /// being evaluated".
    pub scale: Option<f64>,
}

impl CorrelationSpec {
    pub fn new(kernel: Kernel, gamma: f64, lambda: f64, scale: Option<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(
                "correlation.gamma",
                format!("must lie in [0, 1], got {gamma}"),
            ));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config(
                "correlation.lambda",
                format!("must be positive, got {lambda}"),
            ));
        }
        if let Some(s) = scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("correlation.scale", format!("must be positive, got {s}")));
            }
        }
        if let Kernel::Table(knots) = &kernel {
            validate_table(knots)?;
        }
        Ok(CorrelationSpec {
            kernel,
            gamma,
            lambda,
            scale,
        })
    }

    pub fn exponential(gamma: f64, lambda: f64) -> Result<Self> {
        Self::new(Kernel::Exponential, gamma, lambda, None)
    }

    /// The same spec with an explicit scale.
    pub fn with_scale(&self, scale: f64) -> Self {
        CorrelationSpec {
            scale: Some(scale),
            ..self.clone()
        }
    }

    /// Effective scale for a design of `n` points.
    pub fn scale_for(&self, n: usize) -> f64 {
        self.scale.unwrap_or(n as f64)
    }
}

fn validate_table(knots: &[(f64, f64)]) -> Result<()> {
    let path = "correlation.table";
    if knots.len() < 2 {
        return Err(Error::config(path, "needs at least two knots"));
    }
    if knots[0] != (0.0, 1.0) {
        return Err(Error::config(path, "first knot must be (0, 1)"));
    }
    if knots.last().unwrap().1 != 0.0 {
        return Err(Error::config(path, "last knot must have value 0"));
    }
    for w in knots.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::config(path, "knot times must be strictly increasing"));
        }
        if !(w[1].1 <= w[0].1 && w[1].1 >= 0.0) {
            return Err(Error::config(path, "values must be nonincreasing in [0, 1]"));
        }
    }
    Ok(())
}

fn table_eval(knots: &[(f64, f64)], x: f64) -> f64 {
    let last = knots[knots.len() - 1];
    if x >= last.0 {
        return 0.0;
    }
    let i = knots.partition_point(|k| k.0 <= x);
    let (a, b) = (knots[i - 1], knots[i]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Kernel value `rho(|t|)`.
pub fn rho(spec: &CorrelationSpec, t: f64) -> f64 {
    let t = t.abs();
    match &spec.kernel {
        Kernel::Exponential => (-spec.lambda * t).exp(),
        Kernel::Gaussian => (-spec.lambda * t * t).exp(),
        Kernel::Table(knots) => table_eval(knots, spec.lambda * t),
    }
}

/// `r_n(dt) = rho(scale |dt|)`; requires an explicit scale or uses 1.
pub fn r_scaled(spec: &CorrelationSpec, dt: f64) -> f64 {
    rho(spec, spec.scale.unwrap_or(1.0) * dt.abs())
}

/// `Q(t) = sum_{j >= 1} rho(j t)` for `t > 0`; `Q(+inf) = 0`.
///
/// The exponential kernel uses the geometric closed form; others sum the
/// series (see [`q_series`]).
pub fn q_function(spec: &CorrelationSpec, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain(format!("Q(t) requires t > 0, got {t}")));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    match spec.kernel {
        Kernel::Exponential => Ok(1.0 / (spec.lambda * t).exp_m1()),
        _ => q_series(spec, t),
    }
}

/// Direct summation of the Q series, stopping once both the current term
/// and the geometric estimate of the remaining tail drop below
/// `Q_SERIES_TOL * (1 + partial sum)`.
pub fn q_series(spec: &CorrelationSpec, t: f64) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain(format!("Q(t) requires t > 0, got {t}")));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut prev = 1.0;
    for j in 1..=Q_SERIES_MAX_TERMS {
        let term = rho(spec, j as f64 * t);
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        let bound = Q_SERIES_TOL * (1.0 + sum);
        if term < bound {
            // kernels are nonincreasing, so the ratio bounds later ratios
            // for log-concave tails (exponential, gaussian)
            let ratio = term / prev;
            if ratio < 1.0 && term * ratio / (1.0 - ratio) < bound {
                return Ok(sum);
            }
        }
        prev = term;
    }
    Err(Error::NonConvergence {
        terms: Q_SERIES_MAX_TERMS,
        partial_sum: sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp(lambda: f64) -> CorrelationSpec {
        CorrelationSpec::exponential(0.5, lambda).unwrap()
    }

    fn gauss(lambda: f64) -> CorrelationSpec {
        CorrelationSpec::new(Kernel::Gaussian, 0.5, lambda, None).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(&exp(1.0), 0.0), 1.0);
        assert!((rho(&exp(1.2), 1.0) - 0.301194211912202).abs() < 1e-15);
        assert!((rho(&gauss(0.5), 2.0) - 0.135335283236613).abs() < 1e-15);
        assert_eq!(rho(&exp(1.2), -1.0), rho(&exp(1.2), 1.0));
    }

    #[test]
    fn r_scaled_examples() {
        let s = exp(1.0).with_scale(10.0);
        assert!((r_scaled(&s, 0.1) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(r_scaled(&s, 0.0), 1.0);
        assert_eq!(r_scaled(&gauss(3.0).with_scale(7.0), 0.0), 1.0);
        let s = exp(0.05).with_scale(14.0);
        assert!((r_scaled(&s, 2.0) - 0.246596963941606).abs() < 1e-14);
    }

    #[test]
    fn q_examples() {
        assert!((q_function(&exp(1.0), 1.0).unwrap() - 0.581976706869326).abs() < 1e-14);
        assert!((q_function(&exp(0.2), 1.0).unwrap() - 4.516655566126994).abs() < 1e-13);
        // sum_j exp(-4 j^2) to 30 digits: 0.0183157514239091315
        assert!((q_function(&gauss(1.0), 2.0).unwrap() - 0.0183157514239091).abs() < 1e-14);
        assert_eq!(q_function(&exp(1.0), f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn q_errors() {
        assert!(matches!(q_function(&exp(1.0), 0.0), Err(Error::Domain(_))));
        assert!(matches!(q_function(&exp(1.0), -2.0), Err(Error::Domain(_))));
        // a very slowly decaying kernel exhausts the term cap
        let slow = gauss(1e-15);
        match q_series(&slow, 1e-3) {
            Err(Error::NonConvergence { terms, partial_sum }) => {
                assert_eq!(terms, Q_SERIES_MAX_TERMS);
                assert!(partial_sum > 1e6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            CorrelationSpec::exponential(1.5, 1.0),
            Err(Error::Config { ref path, .. }) if path == "correlation.gamma"
        ));
        assert!(CorrelationSpec::exponential(0.5, 0.0).is_err());
        assert!(CorrelationSpec::new(Kernel::Exponential, 0.5, 1.0, Some(-1.0)).is_err());
        assert!(CorrelationSpec::new(Kernel::Table(vec![(0.0, 0.9), (1.0, 0.0)]), 0.5, 1.0, None).is_err());
        assert!(CorrelationSpec::new(Kernel::Table(vec![(0.0, 1.0), (1.0, 0.5)]), 0.5, 1.0, None).is_err());
    }

    #[test]
    fn table_kernel() {
        let spec =
            CorrelationSpec::new(Kernel::Table(vec![(0.0, 1.0), (1.0, 0.5), (3.0, 0.0)]), 0.5, 1.0, None).unwrap();
        assert_eq!(rho(&spec, 0.0), 1.0);
        assert_eq!(rho(&spec, 0.5), 0.75);
        assert_eq!(rho(&spec, 2.0), 0.25);
        assert_eq!(rho(&spec, 5.0), 0.0);
        // Q(1) = rho(1) + rho(2) = 0.75
        assert!((q_function(&spec, 1.0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn q_vanishes_at_infinity() {
        for &lambda in &[0.01, 0.2, 1.0, 5.0] {
            assert!(q_function(&exp(lambda), 1e6 / lambda).unwrap() < 1e-12);
            assert!(q_function(&gauss(lambda), 1e6 / lambda).unwrap() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_series(t in 0.05..50.0f64, lambda in 0.01..5.0f64) {
            let s = exp(lambda);
            let closed = q_function(&s, t).unwrap();
            let series = q_series(&s, t).unwrap();
            prop_assert!((closed - series).abs() <= 1e-10 * closed.max(1.0), "{} vs {}", closed, series);
        }

        #[test]
        fn q_nonincreasing(t1 in 0.01..20.0f64, dt in 0.0..20.0f64, lambda in 0.05..3.0f64) {
            let t2 = t1 + dt;
            for s in [exp(lambda), gauss(lambda)] {
                prop_assert!(q_function(&s, t1).unwrap() >= q_function(&s, t2).unwrap());
            }
        }

        #[test]
        fn rho_in_unit_interval(t in -100.0..100.0f64, lambda in 0.01..5.0f64) {
            for s in [exp(lambda), gauss(lambda)] {
                let v = rho(&s, t);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
