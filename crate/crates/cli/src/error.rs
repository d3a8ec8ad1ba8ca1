use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files. Exit 2.
    Usage(String),
    /// A numerical or physical domain error from the toolkit. Exit 3.
    Domain(String),
    /// `reproduce-paper` found a criterion out of tolerance. Exit 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Domain(msg) => write!(f, "{msg}"),
            CliError::Failed(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ercav::Error> for CliError {
    fn from(e: ercav::Error) -> Self {
        match e {
            ercav::Error::Domain(_) => CliError::Domain(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
