use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A malformed line or record in an input file, with its 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("ambiguous synonym \"{synonym}\": maps to both {first} and {second}")]
    AmbiguousSynonym {
        synonym: String,
        first: String,
        second: String,
    },

    /// An entry matched nothing in the taxonomy; callers discard it.
    #[error("entry has no salient features")]
    EmptyFeatureSet,

    #[error("unknown key \"{key}\" (nearest: {})", suggestions.join(", "))]
    UnknownKey {
        key: String,
        suggestions: Vec<String>,
    },

    #[error("corpus too small for thresholds: {0}")]
    CorpusTooSmall(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("missing artifact {path}: run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors rooted in the filesystem rather than in file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
