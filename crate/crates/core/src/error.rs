use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("face {face} has zero area")]
    ZeroAreaFace { face: usize },

    #[error("mesh is disconnected: {unreachable} of {total} vertices unreachable from vertex {source_vertex}")]
    Disconnected {
        source_vertex: usize,
        unreachable: usize,
        total: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("consistency condition violated at eigenvalue index {index}: G = {value:e} < {threshold:e}")]
    Consistency {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Process exit code: 1 usage, 2 data error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidMesh(_)
            | Error::ZeroAreaFace { .. }
            | Error::Disconnected { .. }
            | Error::Dimension(_) => 2,
            Error::NoConvergence(_) | Error::Consistency { .. } | Error::Singular(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
