use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numeric degeneracy: {0}")]
    Degenerate(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("augmentation not applicable: {0}")]
    Inapplicable(String),
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("parse error in section `{section}` (line {line}): {message}")]
    Parse {
        section: String,
        line: usize,
        message: String,
    },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 2,
            Error::Divergence(_) | Error::Degenerate(_) => 4,
            Error::Shape(_)
            | Error::Input(_)
            | Error::Lookup(_)
            | Error::Inapplicable(_)
            | Error::MetricUndefined(_)
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Io(_) => 3,
        }
    }

    pub(crate) fn parse(section: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            section: section.to_string(),
            line,
            message: message.into(),
        }
    }
}
