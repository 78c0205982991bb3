use std::path::PathBuf;

/// Command failures, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Io { .. } => "io",
            CliError::Numerical(_) => "numerical",
            CliError::NonConvergence(_) => "nonconvergence",
        }
    }

    /// `error[tag]: message` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.tag())
    }
}

impl From<randman_core::Error> for CliError {
    fn from(e: randman_core::Error) -> Self {
        use randman_core::Error as E;
        match e {
            E::Dimension { .. } | E::Input(_) => CliError::Input(e.to_string()),
            E::Numerical(_) | E::Degenerate(_) => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
