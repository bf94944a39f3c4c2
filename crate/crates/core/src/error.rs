use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BakerError {
    /// l + r + Σm + Σs does not add up to N.
    #[error("SUM_MISMATCH: {0}")]
    SumMismatch(String),

    #[error("RANGE: {0}")]
    Range(String),

    #[error("SHAPE: {0}")]
    Shape(String),

    #[error("CAPACITY: {0}")]
    Capacity(String),

    #[error("FRAME_MISMATCH: expected frame {expected}, got {got}")]
    FrameMismatch { expected: usize, got: usize },

    #[error("NEGATIVE_PROB: {0}")]
    NegativeProb(f64),

    /// A checked numerical invariant failed (mass conservation and the like).
    #[error("NUMERICAL: {0}")]
    Numerical(String),

    #[error("IO: {0}")]
    Io(String),
}

impl BakerError {
    /// Short machine-readable tag, as printed in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SumMismatch(_) => "SUM_MISMATCH",
            Self::Range(_) => "RANGE",
            Self::Shape(_) => "SHAPE",
            Self::Capacity(_) => "CAPACITY",
            Self::FrameMismatch { .. } => "FRAME_MISMATCH",
            Self::NegativeProb(_) => "NEGATIVE_PROB",
            Self::Numerical(_) => "NUMERICAL",
            Self::Io(_) => "IO",
        }
    }

    /// Process exit code: 2 invalid input, 3 capacity, 4 numerical invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Capacity(_) => 3,
            Self::NegativeProb(_) | Self::Numerical(_) => 4,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for BakerError {
    fn from(err: std::io::Error) -> Self {
        Self::Io(err.to_string())
    }
}

pub type BakerResult<T> = Result<T, BakerError>;
