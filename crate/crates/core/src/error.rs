use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid camera {view}: {field}: {msg}")]
    InvalidCamera {
        view: i64,
        field: &'static str,
        msg: String,
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh is not watertight: {count} bad edges, e.g. {examples:?}")]
    NotWatertight {
        count: usize,
        examples: Vec<(usize, usize)>,
    },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("invalid hand model: {0}")]
    InvalidHandModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("deformation graph: {0}")]
    Graph(String),
    #[error("frame {frame}, stage {stage}: {source}")]
    Stage {
        frame: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// True for errors caused by malformed or missing inputs rather than a
    /// failing computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidCamera { .. }
            | Error::InvalidMask(_)
            | Error::InvalidHandModel(_)
            | Error::InvalidConfig(_)
            | Error::InvalidInput(_)
            | Error::NotWatertight { .. }
            | Error::InvalidMesh(_) => true,
            Error::Graph(_) => false,
        }
    }
}
