use thiserror::Error;

/// Errors produced by model construction, design evaluation and optimization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("parameter index out of range: b{index} referenced but model has p = {p}")]
    ParameterIndex { index: usize, p: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported criterion: {0}")]
    UnsupportedCriterion(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("numerical error: {message} (condition number estimate {condition:.3e})")]
    Numerical { message: String, condition: f64 },

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("series did not converge after {terms} terms (partial sum {partial_sum})")]
    NonConvergence { terms: usize, partial_sum: f64 },

    #[error("invalid starting point: objective is {0} at x0")]
    InvalidStart(f64),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for invalid input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Syntax { .. }
            | Error::ParameterIndex { .. }
            | Error::Validation(_)
            | Error::Domain(_)
            | Error::UnsupportedCriterion(_)
            | Error::Json { .. } => 2,
            Error::SingularDesign(_)
            | Error::Numerical { .. }
            | Error::DegenerateDensity(_)
            | Error::DegenerateDesign(_)
            | Error::NonConvergence { .. }
            | Error::InvalidStart(_)
            | Error::OptimizationFailed(_) => 3,
            Error::Io { .. } => 1,
        }
    }

    /// Short machine-readable tag used in diagnostic output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Syntax { .. } => "syntax",
            Error::ParameterIndex { .. } => "parameter_index",
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::UnsupportedCriterion(_) => "unsupported_criterion",
            Error::SingularDesign(_) => "singular_design",
            Error::Numerical { .. } => "numerical",
            Error::DegenerateDensity(_) => "degenerate_density",
            Error::DegenerateDesign(_) => "degenerate_design",
            Error::NonConvergence { .. } => "non_convergence",
            Error::InvalidStart(_) => "invalid_start",
            Error::OptimizationFailed(_) => "optimization_failed",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
