use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint dimension mismatch: layer dims imply {expected} parameters, file holds {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("gradient norm {norm:e} is below the singularity threshold")]
    SingularGradient { norm: f64 },

    #[error("vector is not tangent to the surface (|<v,N>| = {dot:e})")]
    NotTangent { dot: f64 },

    #[error("OBJ parse error at line {line}: {message}")]
    ObjParse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("partition class {class} is empty but has sampling fraction {fraction}")]
    EmptyClass { class: usize, fraction: f64 },

    #[error("every on-surface point has a vanishing network gradient")]
    AllPointsDegenerate,

    #[error("interpolation system is singular or ill-conditioned (pivot ratio {pivot_ratio:e})")]
    SingularSystem { pivot_ratio: f64 },

    #[error("training diverged at epoch {epoch}: non-finite {term}")]
    Diverged { epoch: usize, term: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
