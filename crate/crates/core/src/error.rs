use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration; `field` names the offending entry.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Coefficient field dropped below the admissible floor (0 < m <= n is required).
    #[error("density floor violated: min value {min:.3e} at index {index} is below the floor {floor:.3e}")]
    DensityFloor { min: f64, index: usize, floor: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("state is not normalized: |psi| = {norm:.12}")]
    Unnormalized { norm: f64 },

    #[error("operator {0} is not Hermitian")]
    NonHermitian(String),

    #[error("missing potential orders: need {needed}, have {available}")]
    MissingOrders { needed: usize, available: usize },

    /// Initial states of the two systems disagree in density or its first time derivative.
    #[error("initial-state compatibility violated ({condition}): max deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    Compatibility {
        condition: &'static str,
        deviation: f64,
        tolerance: f64,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("inversion failed at order {order}: {source}")]
    Order {
        order: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the input configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } => true,
            Error::Stage { source, .. } | Error::Order { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
