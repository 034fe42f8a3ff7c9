use thiserror::Error;

pub type Result<T, E = FracError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FracError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("bit string length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigendecomposition failed: {0}")]
    EigFailure(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("degenerate core tensor: extracted magnitude {magnitude:e} below {threshold:e}")]
    DegenerateCore { magnitude: f64, threshold: f64 },
    #[error("signal/noise subspace collapse: eigen-gap ratio {0}")]
    SubspaceCollapse(f64),
    #[error("normalized frequency {0} maps outside the valid domain")]
    OutOfDomain(f64),
    #[error("matching would enumerate {count:e} combinations (cap {cap:e})")]
    CombinatorialBlowup { count: f64, cap: f64 },
    #[error("Fisher matrix is singular (condition number {0:e})")]
    SingularFisher(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FracError {
    fn from(e: std::io::Error) -> Self {
        FracError::Io(e.to_string())
    }
}

impl FracError {
    /// True for errors caused by the inputs (configuration, scene, files) rather
    /// than by a solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            FracError::InvalidConfig(_)
                | FracError::InvalidScene(_)
                | FracError::Overflow(_)
                | FracError::LengthMismatch { .. }
                | FracError::InvalidSelection(_)
                | FracError::DimensionMismatch(_)
                | FracError::Parse(_)
                | FracError::Io(_)
        )
    }
}
