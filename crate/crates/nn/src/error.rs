use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] uv3_core::Error),

    #[error("non-finite values after {stage}")]
    NonFinite { stage: String },

    #[error("training diverged at step {step}: loss {loss} (initial {initial})")]
    Diverged { step: usize, loss: f64, initial: f64 },

    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Core(e) => e.is_numerical(),
            Error::NonFinite { .. } | Error::Diverged { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
