use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] firmscape_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{}: missing column `{column}`", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{0}")]
    Invalid(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

/// Process exit status for invalid input.
pub const EXIT_INVALID_INPUT: i32 = 2;
/// Process exit status for a failed analysis stage.
pub const EXIT_STAGE_FAILURE: i32 = 3;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn in_stage(stage: &str, source: Error) -> Self {
        match source {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage: stage.to_string(), source: Box::new(e) },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { .. } => EXIT_STAGE_FAILURE,
            Error::Core(firmscape_core::Error::InvalidInput(_)) => EXIT_INVALID_INPUT,
            Error::Core(_) => EXIT_STAGE_FAILURE,
            _ => EXIT_INVALID_INPUT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::invalid("x").exit_code(), 2);
        assert_eq!(Error::from(firmscape_core::Error::Degenerate("flat".into())).exit_code(), 3);
        let staged = Error::in_stage("lisa", Error::invalid("x"));
        assert_eq!(staged.exit_code(), 3);
        assert!(staged.to_string().contains("lisa"));
        let twice = Error::in_stage("outer", staged);
        assert!(twice.to_string().starts_with("stage `lisa`"));
    }
}
