use std::fmt;

/// Error type shared across the crate.
#[derive(Debug)]
pub enum Error {
    /// An op was given tensors whose shapes do not conform to its shape rule.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A configuration violates one of its invariants.
    InvalidConfig(String),
    Io(std::io::Error),
    /// A container (WAVD, CKPT, CSV, manifest) failed to parse or verify.
    Format(String),
    /// Training produced a non-finite loss.
    Divergence { epoch: usize, seed: u64 },
    /// Active tuning produced a non-finite window loss.
    Tuning(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Divergence { epoch, seed } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, seed {seed}")
            }
            Error::Tuning(msg) => write!(f, "active tuning aborted: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
