use thiserror::Error;

/// Unified error type for the whole crate.
///
/// Numerical guards (`NonFinite`, `BlowUp`, `DiffeomorphismLost`) are
/// first-class variants rather than panics so that long sweeps can report
/// which member failed and keep the rest of the run intact.
#[derive(Debug, Error)]
pub enum MochError {
    #[error("grid size {0} must be a power of two, at least 8")]
    BadGridSize(usize),

    #[error("grid period must be positive and finite, got {0}")]
    BadPeriod(f64),

    #[error("fields live on incompatible grids ({0} points vs {1} points)")]
    GridMismatch(usize, usize),

    #[error("non-finite value detected in {0}")]
    NonFinite(&'static str),

    #[error("insufficient resolution for {what}: need Nyquist above {needed}, grid has {actual}")]
    Resolution {
        what: &'static str,
        needed: f64,
        actual: f64,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("solution blew up at t = {t:.6e}, max |gamma| = {max_abs:.3e}")]
    BlowUp { t: f64, max_abs: f64 },

    #[error("flow map stopped being a diffeomorphism at t = {t:.6e}")]
    DiffeomorphismLost { t: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed snapshot file: {0}")]
    BadSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MochError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        MochError::Invalid(msg.into())
    }

    /// Stable process exit code per error class, used by the command-line
    /// front end and mirrored by the C bindings.
    pub fn exit_code(&self) -> i32 {
        match self {
            MochError::Config(_) => 2,
            MochError::BadGridSize(_)
            | MochError::BadPeriod(_)
            | MochError::GridMismatch(..)
            | MochError::Resolution { .. }
            | MochError::Invalid(_) => 3,
            MochError::Io(_) | MochError::BadSnapshot(_) => 4,
            MochError::NonFinite(_)
            | MochError::BlowUp { .. }
            | MochError::DiffeomorphismLost { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, MochError>;
