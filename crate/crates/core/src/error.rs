use thiserror::Error;

/// Errors surfaced by the numerical kernels and drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian: relative defect {defect:.3e}")]
    NotHermitian { defect: f64 },

    #[error("matrix is not unitary: defect {defect:.3e}")]
    NotUnitary { defect: f64 },

    #[error("eigensolver did not converge")]
    EigenSolver,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("integration produced non-finite values after lambda = {last_good_lambda}")]
    IntegrationFailure { last_good_lambda: f64 },

    #[error("diagnostic undefined: {0}")]
    UndefinedDiagnostic(&'static str),

    #[error("no interior minimum of the drive norm in the trajectory")]
    NoMinimum,

    #[error("drive norm fell below the floating-point floor at lambda = {lambda}")]
    FloatingPointFloor { lambda: f64 },

    #[error("no peak in fit window [{lo}, {hi}]")]
    NoPeak { lo: f64, hi: f64 },

    #[error("fit did not converge: {0}")]
    FitDiverged(String),

    #[error("not enough samples: need {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics themselves rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenSolver
                | Error::IntegrationFailure { .. }
                | Error::UndefinedDiagnostic(_)
                | Error::NoMinimum
                | Error::FloatingPointFloor { .. }
                | Error::NoPeak { .. }
                | Error::FitDiverged(_)
                | Error::NotHermitian { .. }
                | Error::NotUnitary { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
