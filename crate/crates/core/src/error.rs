use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid slot {slot} for a layout with {n_spins} spins")]
    InvalidSlot { slot: usize, n_spins: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operator is not Hermitian (max |A - A^dag| = {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("state is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("state is not normalized (trace {trace:.12})")]
    NotNormalized { trace: f64 },

    #[error("drive Hamiltonian requested but charge mode is {mode}")]
    NoDrive { mode: &'static str },

    #[error(
        "top Fock level population {population:.3e} exceeds {threshold:.1e} at t = {t:.4}; \
         raise the cavity cutoff (currently {cutoff})"
    )]
    FockGuard {
        t: f64,
        population: f64,
        threshold: f64,
        cutoff: usize,
    },

    #[error("trace drifted to {trace:.12} at t = {t:.4}; reduce the step size")]
    TraceDrift { t: f64, trace: f64 },

    #[error("state lost positivity at t = {t:.4} (min eigenvalue {min_eigenvalue:.3e})")]
    PositivityLost { t: f64, min_eigenvalue: f64 },

    #[error("steady state not reached by t = {t_max}; last change rate {rate:.3e}")]
    SteadyStateTimeout { t_max: f64, rate: f64 },

    #[error("time series is empty or has no positive times")]
    EmptySeries,

    #[error("config error at {path} (line {line}): {message}")]
    Config { path: String, line: usize, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
