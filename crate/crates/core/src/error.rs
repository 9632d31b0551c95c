use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid cdf: {0}")]
    InvalidCdf(String),

    #[error("measure is not normalized (mass {mass})")]
    NotNormalized { mass: f64 },

    #[error("principal value did not converge at x = {x}: singular cell at the domain edge carries density {density}")]
    EdgeSingularity { x: f64, density: f64 },

    #[error("invalid split radius {0}")]
    InvalidSplit(f64),

    #[error("kernel: {0}")]
    Kernel(String),

    #[error("beta kernel fails the sampled L1 bound: sup_x int |beta(x,y)| dy = {sup_l1} > {bound}")]
    BetaNotIntegrable { sup_l1: f64, bound: f64 },

    #[error("diagonal fill-in of beta disagrees with off-diagonal extrapolation at x = {x} (taylor {taylor}, extrapolated {extrapolated})")]
    BetaDiagonal { x: f64, taylor: f64, extrapolated: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("CFL violation at t = {t}: required dt {required} below floor {floor}")]
    Cfl { t: f64, required: f64, floor: f64 },

    #[error("monotone scheme breakdown at t = {t}: clamp magnitude {clamp}")]
    SchemeBreakdown { t: f64, clamp: f64 },

    #[error("clipped negative mass {clipped} in one step at t = {t}")]
    ClippedMass { t: f64, clipped: f64 },

    #[error("spike: {0}")]
    Spike(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("precondition: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
