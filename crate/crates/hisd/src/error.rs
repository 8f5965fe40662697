use thiserror::Error;

/// Errors produced by the saddle-dynamics kernels, schemes and drivers.
#[derive(Debug, Error)]
pub enum HisdError {
    /// A direction handed to an orthonormalization or retraction kernel is
    /// numerically contained in the span of the preceding vectors (or is the
    /// zero vector). `index` is the zero-based position of the offending
    /// vector within its frame.
    #[error("degenerate direction at index {index}: residual norm {residual:.3e}")]
    DegenerateDirection { index: usize, residual: f64 },

    /// The iteration left the region where the dynamics is meaningful.
    #[error("solution diverged at step {step}: |x| = {norm:.3e}")]
    Divergence { step: usize, norm: f64 },

    /// A model evaluation returned a non-finite value or was called on an
    /// input it rejects.
    #[error("evaluation failed: {0}")]
    Evaluation(String),

    /// Invalid configuration, argument or grid combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HisdError>;
