use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or solver parameter violates its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A thermodynamic state outside the domain of the equation of state.
    #[error("non-physical state: {0}")]
    Domain(String),

    /// An error raised while evaluating a single grid cell.
    #[error("at cell ({i}, {j})")]
    AtCell {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    /// A linear solve that did not reach the requested residual.
    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_cell(self, i: usize, j: usize) -> Self {
        Error::AtCell {
            i,
            j,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
