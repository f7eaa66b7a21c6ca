//! Regression models: builtin analytic models and parsed expressions,
//! their parameter gradients, heteroscedasticity and AUC gradients.

pub mod expr;

use std::fmt;

pub use expr::Expr;

use crate::error::{Error, Result};

/// Relative step for central finite differences.
pub const FD_REL_STEP: f64 = 1e-6;

/// Minimum relative separation `|b1 - b2| / max(|b1|, |b2|)` for the
/// first-order absorption model, whose gradient is singular on the diagonal.
pub const COMPARTMENTAL_DIAGONAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LinearBasis,
    NonlinearBuiltin,
    ParsedExpression,
}

#[derive(Debug, Clone)]
enum Body {
    /// `sum_k b_k t^k`, k = 0..=degree.
    Monomial {
        degree: usize,
    },
    /// `b1 exp(-b2 t)`
    ExpElimination,
    /// `b3 (exp(-b1 t) - exp(-b2 t))`
    Bateman3,
    /// `b1 / (b1 - b2) (exp(-b2 t) - exp(-b1 t))`
    CompartmentalFo,
    Expression(Expr),
}

/// A regression model `eta(t, b)` with its gradient in `b`.
///
/// Values are immutable after construction.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    name: String,
    p: usize,
    body: Body,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (p = {})", self.name, self.p)
    }
}

/// Builtin models by name.
///
/// Accepted names: `quadratic`, `polynomial` (with `degree`), `polynomial(r)`,
/// `constant`, `exp-elimination`, `bateman3`, `compartmental-fo`.
pub fn builtin_model(name: &str, degree: Option<usize>) -> Result<ModelSpec> {
    let (base, inline_degree) = match name.find('(') {
        Some(open) if name.ends_with(')') => {
            let inner = &name[open + 1..name.len() - 1];
            let d = inner
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::config("model.name", format!("bad polynomial degree `{inner}`")))?;
            (&name[..open], Some(d))
        }
        _ => (name, None),
    };
    let degree = inline_degree.or(degree);
    match base {
        "quadratic" => Ok(ModelSpec::monomial(2)),
        "constant" => Ok(ModelSpec::monomial(0)),
        "polynomial" => match degree {
            Some(d) if d >= 1 => Ok(ModelSpec::monomial(d)),
            Some(d) => Err(Error::config(
                "model.degree",
                format!("polynomial degree must be at least 1, got {d}"),
            )),
            None => Err(Error::config("model.degree", "polynomial model requires a degree")),
        },
        "exp-elimination" => Ok(ModelSpec {
            name: "exp-elimination".into(),
            p: 2,
            body: Body::ExpElimination,
        }),
        "bateman3" => Ok(ModelSpec {
            name: "bateman3".into(),
            p: 3,
            body: Body::Bateman3,
        }),
        "compartmental-fo" => Ok(ModelSpec {
            name: "compartmental-fo".into(),
            p: 2,
            body: Body::CompartmentalFo,
        }),
        other => Err(Error::config("model.name", format!("unknown model `{other}`"))),
    }
}

/// Parses a model expression in `t` and `b1..bp`.
///
/// Only syntax and parameter indices are checked here; use
/// [`ModelSpec::validate`] to check finiteness on a domain.
pub fn parse_model_expression(text: &str, p: usize) -> Result<ModelSpec> {
    if p == 0 {
        return Err(Error::config("model.p", "parameter count must be at least 1"));
    }
    let expr = Expr::parse(text)?;
    let max = expr.max_param();
    if max > p {
        return Err(Error::ParameterIndex { index: max, p });
    }
    Ok(ModelSpec {
        name: text.to_string(),
        p,
        body: Body::Expression(expr),
    })
}

impl ModelSpec {
    /// Polynomial basis `(1, t, ..., t^degree)`; degree 0 is the constant model.
    pub fn monomial(degree: usize) -> ModelSpec {
        let name = match degree {
            0 => "constant".to_string(),
            2 => "quadratic".to_string(),
            d => format!("polynomial({d})"),
        };
        ModelSpec {
            name,
            p: degree + 1,
            body: Body::Monomial { degree },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> ModelKind {
        match self.body {
            Body::Monomial { .. } => ModelKind::LinearBasis,
            Body::Expression(_) => ModelKind::ParsedExpression,
            _ => ModelKind::NonlinearBuiltin,
        }
    }

    pub fn expression(&self) -> Option<&Expr> {
        match &self.body {
            Body::Expression(e) => Some(e),
            _ => None,
        }
    }

    /// Checks that `b` has length p and lies in the model's valid region.
    pub fn check_params(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.p {
            return Err(Error::Validation(format!(
                "model {} expects {} parameters, got {}",
                self.name,
                self.p,
                b.len()
            )));
        }
        if let Some(x) = b.iter().find(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("non-finite parameter {x}")));
        }
        if let Body::CompartmentalFo = self.body {
            let scale = b[0].abs().max(b[1].abs());
            if (b[0] - b[1]).abs() < COMPARTMENTAL_DIAGONAL_TOL * scale || scale == 0.0 {
                return Err(Error::Domain(format!(
                    "compartmental-fo requires b1 != b2 (got b1 = {}, b2 = {})",
                    b[0], b[1]
                )));
            }
        }
        Ok(())
    }

    /// Checks that `eta` and the gradient are finite at a set of probe
    /// times across `[lo, hi]` for parameters `b`.
    pub fn validate(&self, lo: f64, hi: f64, b: &[f64]) -> Result<()> {
        self.check_params(b)?;
        let mut g = vec![0.0; self.p];
        for i in 0..=10 {
            let t = lo + (hi - lo) * i as f64 / 10.0;
            let y = self.eta(t, b);
            self.grad_into(t, b, &mut g);
            if !y.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "model {} is not finite at t = {t}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// For linear-basis models, the basis functions `g_k(t)`.
    pub fn linear_basis(&self, t: f64) -> Option<Vec<f64>> {
        match self.body {
            Body::Monomial { degree } => Some(monomials(t, degree)),
            _ => None,
        }
    }

    pub fn eta(&self, t: f64, b: &[f64]) -> f64 {
        match &self.body {
            Body::Monomial { .. } => {
                // Horner in t
                b.iter().rev().fold(0.0, |acc, bk| acc * t + bk)
            }
            Body::ExpElimination => b[0] * (-b[1] * t).exp(),
            Body::Bateman3 => b[2] * ((-b[0] * t).exp() - (-b[1] * t).exp()),
            Body::CompartmentalFo => b[0] / (b[0] - b[1]) * ((-b[1] * t).exp() - (-b[0] * t).exp()),
            Body::Expression(e) => e.eval(t, b),
        }
    }

    pub fn grad(&self, t: f64, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        self.grad_into(t, b, &mut out);
        out
    }

    /// Writes `d eta / d b` at `(t, b)` into `out` (length p).
    pub fn grad_into(&self, t: f64, b: &[f64], out: &mut [f64]) {
        match &self.body {
            Body::Monomial { .. } => {
                let mut v = 1.0;
                for o in out.iter_mut() {
                    *o = v;
                    v *= t;
                }
            }
            Body::ExpElimination => {
                let e = (-b[1] * t).exp();
                out[0] = e;
                out[1] = -b[0] * t * e;
            }
            Body::Bateman3 => {
                let e1 = (-b[0] * t).exp();
                let e2 = (-b[1] * t).exp();
                out[0] = -b[2] * t * e1;
                out[1] = b[2] * t * e2;
                out[2] = e1 - e2;
            }
            Body::CompartmentalFo => {
                let (b1, b2) = (b[0], b[1]);
                let e1 = (-b1 * t).exp();
                let e2 = (-b2 * t).exp();
                let d2 = (b1 - b2) * (b1 - b2);
                let cross = (b1 * b1 - b1 * b2) * t;
                out[0] = (b2 * (e1 - e2) + cross * e1) / d2;
                out[1] = (b1 * (e2 - e1) - cross * e2) / d2;
            }
            Body::Expression(_) => self.fd_grad_into(t, b, out),
        }
    }

    /// Central finite-difference gradient with relative step
    /// `FD_REL_STEP * max(1, |b_k|)`.
    pub fn fd_grad_into(&self, t: f64, b: &[f64], out: &mut [f64]) {
        let mut work = b.to_vec();
        for k in 0..self.p {
            let h = FD_REL_STEP * b[k].abs().max(1.0);
            work[k] = b[k] + h;
            let up = self.eta(t, &work);
            work[k] = b[k] - h;
            let down = self.eta(t, &work);
            work[k] = b[k];
            out[k] = (up - down) / (2.0 * h);
        }
    }

    /// Closed-form area under the curve on `[0, inf)`, when available.
    pub fn auc(&self, b: &[f64]) -> Option<f64> {
        match self.body {
            Body::CompartmentalFo => Some(1.0 / b[1]),
            Body::ExpElimination => Some(b[0] / b[1]),
            Body::Bateman3 => Some(b[2] * (1.0 / b[0] - 1.0 / b[1])),
            _ => None,
        }
    }
}

fn monomials(t: f64, degree: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(degree + 1);
    let mut x = 1.0;
    for _ in 0..=degree {
        v.push(x);
        x *= t;
    }
    v
}

/// Gradient of the AUC with respect to the parameters, used as the c-vector
/// of the AUC criterion.
pub fn auc_gradient(model: &ModelSpec, beta0: &[f64]) -> Result<Vec<f64>> {
    model.check_params(beta0)?;
    let b = beta0;
    match model.body {
        Body::CompartmentalFo => Ok(vec![0.0, -1.0 / (b[1] * b[1])]),
        Body::ExpElimination => Ok(vec![1.0 / b[1], -b[0] / (b[1] * b[1])]),
        Body::Bateman3 => Ok(vec![
            -b[2] / (b[0] * b[0]),
            b[2] / (b[1] * b[1]),
            1.0 / b[0] - 1.0 / b[1],
        ]),
        _ => Err(Error::UnsupportedCriterion(format!(
            "model {} has no AUC formula",
            model.name
        ))),
    }
}

/// Heteroscedastic error model: `Var(eps(t)) = sigma2 * h(t)^2`.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub sigma2: f64,
    h: Option<Expr>,
}

impl NoiseSpec {
    pub fn homoscedastic(sigma2: f64) -> Result<NoiseSpec> {
        Self::new(sigma2, None)
    }

    pub fn new(sigma2: f64, h: Option<Expr>) -> Result<NoiseSpec> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::config("noise.sigma2", format!("must be positive, got {sigma2}")));
        }
        if let Some(e) = &h {
            if e.max_param() > 0 {
                return Err(Error::config("noise.h", "h may only depend on t"));
            }
        }
        Ok(NoiseSpec { sigma2, h })
    }

    /// Like [`NoiseSpec::new`] but allows `sigma2 = 0`, for noiseless checks
    /// and simulation fixtures.
    pub fn new_allow_zero(sigma2: f64, h: Option<Expr>) -> Result<NoiseSpec> {
        if sigma2 == 0.0 {
            let mut n = Self::new(1.0, h)?;
            n.sigma2 = 0.0;
            Ok(n)
        } else {
            Self::new(sigma2, h)
        }
    }

    pub fn h_expr(&self) -> Option<&Expr> {
        self.h.as_ref()
    }

    pub fn h(&self, t: f64) -> f64 {
        self.h.as_ref().map_or(1.0, |e| e.eval(t, &[]))
    }

    /// Checks `h(t) > 0` on a probe grid over `[lo, hi]`.
    pub fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        for i in 0..=100 {
            let t = lo + (hi - lo) * i as f64 / 100.0;
            let h = self.h(t);
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("noise.h", format!("h({t}) = {h} is not positive")));
            }
        }
        Ok(())
    }
}

/// `f(t) = grad(t, beta0) / h(t)`, the regression vector of the linearized model.
pub fn regression_vector(model: &ModelSpec, noise: &NoiseSpec, t: f64, beta0: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.p()];
    regression_vector_into(model, noise, t, beta0, &mut out)?;
    Ok(out)
}

pub(crate) fn regression_vector_into(
    model: &ModelSpec,
    noise: &NoiseSpec,
    t: f64,
    beta0: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let h = noise.h(t);
    if !(h > 0.0) {
        return Err(Error::Domain(format!("h({t}) = {h} must be positive")));
    }
    model.grad_into(t, beta0, out);
    for v in out.iter_mut() {
        *v /= h;
    }
    Ok(())
}
