use std::fmt;

/// A failure with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags or flag values (exit 2).
    Usage(String),
    /// Unreadable or malformed input files (exit 3).
    Input(String),
    /// Degenerate directions or derivatives, numerical trouble (exit 4).
    Degenerate(String),
    /// Some method failed in every trial (exit 5).
    Experiment(String),
    /// Output could not be written (exit 1).
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Output(_) => 1,
            Self::Usage(_) => 2,
            Self::Input(_) => 3,
            Self::Degenerate(_) => 4,
            Self::Experiment(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Input(m) => write!(f, "input error: {m}"),
            Self::Degenerate(m) => write!(f, "degenerate: {m}"),
            Self::Experiment(m) => write!(f, "experiment failed: {m}"),
            Self::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<drci_core::Error> for CliError {
    fn from(e: drci_core::Error) -> Self {
        use drci_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::InvalidDivergence { .. } | E::SizeGuard { .. } => {
                Self::Usage(e.to_string())
            }
            E::DegenerateDirection(_) | E::DegenerateDerivative(_) | E::Numerical(_) => {
                Self::Degenerate(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
