use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected length {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symmetric eigensolver did not converge within {max_iter} iterations")]
    EigenNonConvergence { max_iter: usize },

    /// The right-hand side of the elliptic equation has content along the
    /// operator's kernel, so no exact solution exists.
    #[error("elliptic obstruction: zero-mode content {magnitude:e} exceeds tolerance {tolerance:e}")]
    EllipticObstruction { magnitude: f64, tolerance: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(&'static str),

    #[error("time step {dt:e} outside stability bound {bound:e}")]
    Unstable { dt: f64, bound: f64 },

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("trajectory time steps are not uniform")]
    NonUniformStep,

    #[error("state is off-shell: constraint residual {residual:e} exceeds {tolerance:e}")]
    OffShell { residual: f64, tolerance: f64 },

    #[error("integration blew up at t = {time}: energy {energy:e} exceeds 10x initial {initial:e}")]
    Blowup { time: f64, energy: f64, initial: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing column `{column}` in {file}")]
    MissingColumn { column: String, file: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}
