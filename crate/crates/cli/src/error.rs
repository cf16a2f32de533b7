use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] uv3_core::Error),

    #[error(transparent)]
    Nn(#[from] uv3_nn::Error),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 3 for numerical failures, 2 for everything attributable to the input.
    pub fn exit_code(&self) -> i32 {
        let numerical = match self {
            CliError::Core(e) => e.is_numerical(),
            CliError::Nn(e) => e.is_numerical(),
            CliError::Usage(_) => false,
        };
        if numerical {
            3
        } else {
            2
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
