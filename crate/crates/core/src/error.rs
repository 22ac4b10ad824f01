use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scaling factor psi = {0} outside [0, 1)")]
    UnstablePsi(f64),

    /// Regressor matrix is rank deficient under the relative singular-value threshold.
    #[error("singular regressor matrix (smallest/largest singular value = {ratio:.3e})")]
    Singular { ratio: f64 },

    #[error("piecewise-linear fit is singular; segments without samples: {segments:?}")]
    StarvedSegments { segments: Vec<usize> },

    #[error("piecewise-linear map is not monotonic and cannot be inverted")]
    NonMonotonic,

    #[error("piecewise-linear segment {segment} has zero slope around y = {y}")]
    DegenerateSegment { segment: usize, y: f64 },

    #[error("recursive least squares breakdown: lambda + phi'P phi = {denominator:e}")]
    Breakdown { denominator: f64 },

    #[error("output nonlinearity lost monotonicity at iteration {iteration}")]
    Sensitivity { iteration: usize },

    #[error("linear block has zero steady-state gain ({gain:e}); cannot normalize")]
    ZeroGain { gain: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
