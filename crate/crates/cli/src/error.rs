use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] collide_core::Error),
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    /// 1 usage or config error, 2 infeasible parameters, 3 verification
    /// failure.
    pub fn exit_code(&self) -> i32 {
        use collide_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Core(E::InvalidArgument(_) | E::Unsupported(_)) => 1,
            CliError::Core(E::Infeasible(_)) => 2,
            CliError::Core(E::Inconclusive(_)) | CliError::Failed(_) => 3,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return CliError::Io(io);
            }
            unreachable!("is_io_error implies an Io kind");
        }
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        match e.io_error_kind() {
            Some(kind) => CliError::Io(std::io::Error::new(kind, e)),
            None => CliError::Io(std::io::Error::other(e)),
        }
    }
}
