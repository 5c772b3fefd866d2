use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the toolkit.
///
/// Variants are grouped by what the caller should do about them: fix the
/// inputs (`Geometry`, `Input`, `MaskRange`, ...), refine the numerics
/// (`Resolution`, `Clipping`), or treat the run as failed (`Convergence`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("cavity unstable or marginally stable: {0}")]
    Unstable(String),

    #[error("grid too coarse or too small: {0}")]
    Resolution(String),

    #[error("grids not commensurate: {0}")]
    GridMismatch(String),

    #[error("mask values out of range: {0}")]
    MaskRange(String),

    #[error("field clipped at grid edge: {0}")]
    Clipping(String),

    #[error("eigen-solve did not converge: {0}")]
    Convergence(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("scenario invalid ({} violation(s)):\n  {}", violations.len(), violations.join("\n  "))]
    Scenario { violations: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Convergence(_) | Error::Io(_))
    }
}
