use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("resolvent root not found after {iterations} iterations; bracket [{lo}, {hi}], residual {residual:e}")]
    RootNotConverged {
        lo: f64,
        hi: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("Picard iteration did not contract on window starting at t={window_start}: {iterations} iterations, last change {last_change:e}, estimated Lipschitz factor {lipschitz_estimate:.3}")]
    NonContraction {
        window_start: f64,
        iterations: usize,
        last_change: f64,
        lipschitz_estimate: f64,
    },

    #[error("contraction window T0={t0:e} is shorter than the time step {dt:e} (lambda={lambda:e}); use a larger lambda or a finer grid")]
    WindowTooShort { t0: f64, dt: f64, lambda: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("lambda continuation is not Cauchy: distances {distances:?}")]
    NonCauchy { distances: Vec<f64> },
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
