use std::path::PathBuf;

use neural_implicit::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] Error),
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Schema { .. } => EXIT_SCHEMA,
            CliError::Core(e) => match e {
                Error::Io { .. } | Error::ObjParse { .. } | Error::Mesh(_) => EXIT_IO,
                Error::Diverged { .. } | Error::SingularSystem { .. } | Error::AllPointsDegenerate => EXIT_NUMERICAL,
                _ => EXIT_SCHEMA,
            },
        }
    }
}

pub fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
