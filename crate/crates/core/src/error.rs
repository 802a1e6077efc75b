use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mode set with {modes} modes exceeds the budget of {budget}")]
    ResourceLimit { modes: usize, budget: usize },

    #[error("mode {k:?} lies outside the band of the density")]
    OutOfBand { k: [i32; 3] },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fields live on incompatible mode sets")]
    IncompatibleModes,

    #[error("not a ground state: residual {residual:e} at mode {k:?}")]
    NotAGroundState { k: [i32; 3], residual: f64 },

    #[error("invalid expansion point: {0}")]
    InvalidExpansionPoint(String),

    #[error("fixed-point iteration did not converge in {iters} iterations at dt = {dt:e} (last update {residual:e})")]
    StepSize { dt: f64, iters: usize, residual: f64 },

    #[error("energy drift {drift:e} exceeded the safety bound at t = {t}")]
    BlowUp { t: f64, drift: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
