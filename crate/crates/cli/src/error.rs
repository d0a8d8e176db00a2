use thiserror::Error;

/// Command failures, each mapped to a process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{0}")]
    Assumption(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::Assumption(_) => 4,
            Self::Io(_) => 1,
        }
    }

    pub fn context(self, what: &str) -> Self {
        match self {
            Self::Validation(m) => Self::Validation(format!("{what}: {m}")),
            Self::Numerical(m) => Self::Numerical(format!("{what}: {m}")),
            Self::Assumption(m) => Self::Assumption(format!("{what}: {m}")),
            Self::Io(m) => Self::Io(format!("{what}: {m}")),
        }
    }
}

impl From<suballoc::Error> for CliError {
    fn from(e: suballoc::Error) -> Self {
        use suballoc::Error as E;
        match e {
            E::InvalidDimension(_) | E::InvalidParameter(_) => Self::Validation(e.to_string()),
            E::GraphAssumption(_) => Self::Assumption(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}
