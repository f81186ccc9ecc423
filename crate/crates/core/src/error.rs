use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: fields live on different grids")]
    GridMismatch,

    #[error("kernel width {width} is under-resolved; minimum width is {min_width}")]
    UnderResolvedKernel { width: f64, min_width: f64 },

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("invalid potential specification: {0}")]
    InvalidPotential(String),

    #[error("assumption (A9) violated for this configuration (C0 = {c0} <= 0)")]
    AssumptionA9Violated { c0: f64 },

    #[error("right-hand side has mean {mean:e}; the Neumann problem needs zero-mean data")]
    NonZeroMean { mean: f64 },

    #[error("time step {dt} exceeds the stability guard {limit}")]
    TimeStepTooLarge { dt: f64, limit: f64 },

    #[error("Newton iteration failed to keep phi inside (-1, 1) ({0}); try a smaller dt")]
    NewtonFailure(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("steady solve did not converge after {steps} steps (r_phi {r_phi:e}, r_mu {r_mu:e}, r_u {r_u:e}, march {march:e})")]
    SteadyNotConverged {
        steps: usize,
        r_phi: f64,
        r_mu: f64,
        r_u: f64,
        march: f64,
    },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("certificate refused: {0}")]
    CertificateRefused(String),

    #[error("structural assumptions failed: {0}")]
    AssumptionsFailed(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
