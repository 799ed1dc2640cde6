use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure modes of
/// the public operations; domain errors exit the CLI with status 1, usage
/// errors with status 2.
#[derive(Error, Debug)]
pub enum Error {
    #[error("quadrature failed to converge: partial value {partial}, error estimate {estimate} exceeds tolerance")]
    QuadratureFailure { partial: f64, estimate: f64 },

    #[error("w0 coefficients unavailable for k = {k}")]
    CoefficientsUnavailable { k: u32 },

    #[error("grid too coarse: integrand varies by {ratio:.2}x between nodes {i} and {j}")]
    GridTooCoarse { i: usize, j: usize, ratio: f64 },

    #[error("divergent integrand near r = 0")]
    DivergentIntegrand,

    #[error("orthogonality violation: |<u0, J>| = {measured:e} exceeds tolerance {tol:e}")]
    OrthogonalityViolation { measured: f64, tol: f64 },

    #[error("smallness violation: H^{{2,1}} norm^2 = {measured:e} exceeds c0^2 eps^2 = {bound:e}")]
    SmallnessViolation { measured: f64, bound: f64 },

    #[error("grid mismatch: operator has {expected} nodes, field has {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("empty sample for coercivity ratio")]
    EmptySample,

    #[error("CFL violation: dt = {dt:e} exceeds stable limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("NaN detected at t = {t}, node {node} (r = {r})")]
    NanDetected { t: f64, node: usize, r: f64 },

    #[error("outer boundary R_max = {r_max} would enter the causal past of diagnostics (need >= {needed})")]
    CausalBoundary { r_max: f64, needed: f64 },

    #[error("no root of the orthogonality condition in bracket [{lo}, {hi}]")]
    NoRootInBracket { lo: f64, hi: f64 },

    #[error("root finding did not converge after {iters} iterations (|g| = {residual:e})")]
    MaxIters { iters: usize, residual: f64 },

    #[error("trace too short for finite differences: {len} rows, need {need}")]
    TraceTooShort { len: usize, need: usize },

    #[error("insufficient snapshots on window [{t0}, {t1}]: {count}")]
    InsufficientSnapshots { t0: f64, t1: f64, count: usize },

    #[error("series too short: {len} samples")]
    SeriesTooShort { len: usize },

    #[error("insufficient dynamic range: lambda spans {decades:.2} decades, need {need}")]
    InsufficientDynamicRange { decades: f64, need: f64 },

    #[error("degenerate fit: {reason}")]
    FitDegenerate { reason: String },

    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("run directory error: {0}")]
    RunDir(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
