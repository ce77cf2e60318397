use thiserror::Error;

/// Errors raised by the measure, convexity, flux and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("x = {x} is outside the support [{lo}, {hi}]")]
    OutOfSupport { x: i64, lo: String, hi: String },

    #[error("rate f({x}) = 0 appears in a required factorial product")]
    SingularRate { x: i64 },

    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    #[error("tilt domain ({lower}, {upper}) does not contain 0")]
    InadmissibleDomain { lower: f64, upper: f64 },

    #[error("theta = {theta} is not inside ({lower} + {margin}, {upper} - {margin})")]
    ThetaOutOfDomain {
        theta: f64,
        lower: f64,
        upper: f64,
        margin: f64,
    },

    #[error("truncation window exceeded {cap} sites before the tail bound fell below {tol:e}")]
    TruncationFailure { cap: usize, tol: f64 },

    #[error("non-finite result: {0}")]
    NonFinite(String),

    #[error("density {rho} is outside the attainable interval ({lo}, {hi})")]
    RhoOutOfRange { rho: f64, lo: f64, hi: f64 },

    #[error("no bracket for density {rho} before reaching theta = {theta}")]
    DomainExhausted { rho: f64, theta: f64 },

    #[error("root finder stalled at theta = {theta} with residual {residual:e} > {tol:e}")]
    NoConvergence { theta: f64, residual: f64, tol: f64 },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("function is not convex at x = {x}: slope drops from {left} to {right}")]
    ConvexityViolation { x: f64, left: f64, right: f64 },

    #[error("reduction chain mismatch at step {step}: {detail}")]
    ChainMismatch { step: String, detail: String },

    #[error("normalization of nu drifted by {drift:e}")]
    TruncationTooCoarse { drift: f64 },

    #[error("stochastic monotonicity violated between rho = {rho_lo} and rho = {rho_hi} at y = {y} (margin {margin:e})")]
    MonotonicityViolation {
        rho_lo: f64,
        rho_hi: f64,
        y: i64,
        margin: f64,
    },

    #[error("rate table exhausted: occupancy {occupancy} beyond tabulated range")]
    RateTableExhausted { occupancy: i64 },

    #[error("basic coupling undefined: f decreases at x = {x}")]
    CouplingUndefined { x: i64 },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
