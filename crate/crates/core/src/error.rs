use std::path::PathBuf;

/// Errors raised by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes do not line up (lengths, sample rates, field widths).
    #[error("structural error: {0}")]
    Structural(String),

    /// A parameter is outside its documented domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A fixture or input file could not be accepted; `row` is the 1-based line number.
    #[error("{}: line {row}: {msg}", path.display())]
    Load {
        path: PathBuf,
        row: u64,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
