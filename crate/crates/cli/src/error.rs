use std::fmt;
use std::path::Path;

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input or configuration: exit 2.
    Config(String),
    /// The computation itself failed: exit 3.
    Numerical(String),
    /// Reading or writing files: exit 4.
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<qctrlkit::Error> for CliError {
    fn from(e: qctrlkit::Error) -> Self {
        use qctrlkit::Error as E;
        match e {
            E::Numerical(_) | E::Optimization(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
