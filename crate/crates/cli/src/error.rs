use swimmer_core::SwimmerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("solver: {0}")]
    Solver(SwimmerError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("selfcheck: {0} of {1} checks failed")]
    Selfcheck(usize, usize),
}

impl From<SwimmerError> for CliError {
    fn from(e: SwimmerError) -> Self {
        match e.root() {
            SwimmerError::InvalidParameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Selfcheck(..) => 4,
            CliError::Io(_) => 1,
        }
    }
}
