use thiserror::Error;

/// Errors raised by the geometry, construction and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate cell (volume {volume:e})")]
    DegenerateCell { volume: f64 },
    #[error("clipping plane does not meet the cell interior")]
    EmptyClip,
    #[error("equal-volume split of cell {cell_id} did not converge")]
    SplitFailure { cell_id: u64 },
    #[error("averaging-set solver failed on cell {cell_id:?}: best residual {best_residual:e}")]
    SolverFailure {
        cell_id: Option<u64>,
        best_residual: f64,
    },
    #[error("averaging-set solver failed on {failed} of {cells} cells (first: cell {cell_id}, residual {best_residual:e})")]
    PlacementFailure {
        cell_id: u64,
        failed: usize,
        cells: usize,
        best_residual: f64,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("covariance is ill-posed on this grid: clipped spectral mass fraction {clip_fraction:e}")]
    IllPosedCovariance { clip_fraction: f64 },
    #[error("wavenumber {k} is a pole of the spectral density")]
    Pole { k: f64 },
    #[error("bin at k = {k} has value {value:e}, at or below the noise floor")]
    BelowNoiseFloor { k: f64, value: f64 },
    #[error(
        "{function} has Fourier-smooth exponent {exponent}, too rough to resolve exponent {expected}"
    )]
    TestFunctionTooRough {
        function: String,
        exponent: f64,
        expected: f64,
    },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
