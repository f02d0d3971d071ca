//! Crate-wide error type.

use thiserror::Error;

use crate::config::ConfigErrors;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration rejected; carries every violation found, not just the first.
    #[error("invalid configuration:\n{0}")]
    Config(ConfigErrors),

    /// The NaN watchdog tripped: the scheme diverged.
    #[error("non-finite distribution at node ({x}, {y}) on step {step}")]
    NonFinite { x: usize, y: usize, step: u64 },

    #[error("direction index {0} out of range (0..=8)")]
    DirectionOutOfRange(usize),

    /// Free-surface extrapolation needs two interior rows.
    #[error("grid {nx}x{ny} too thin for free-surface extrapolation (need at least 3 nodes per axis)")]
    GridTooThin { nx: usize, ny: usize },

    /// The spectral reference solver is periodic-only by construction.
    #[error("spectral reference solver requires a fully periodic domain")]
    OracleNotPeriodic,

    /// Inverse transform of a supposedly real field left a significant imaginary part.
    #[error("spectral field has imaginary residue {max_im:e} above tolerance {tol:e}")]
    ComplexResidue { max_im: f64, tol: f64 },

    /// A Crank-Nicolson system matrix failed to invert; should never happen for real wave vectors.
    #[error("internal error: singular Crank-Nicolson matrix at k = ({0}, {1})")]
    SingularMatrix(f64, f64),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("{model} fit did not converge after {iterations} iterations")]
    FitDidNotConverge { model: &'static str, iterations: usize },

    #[error("degenerate {model} fit: {reason}")]
    DegenerateFit { model: &'static str, reason: String },

    /// A travel-time or packet-tracking detector never triggered.
    #[error("no arrival detected: {0}")]
    NoArrival(String),

    /// Relative misfit against an identically zero reference field.
    #[error("misfit reference field is identically zero")]
    ZeroReference,

    #[error("snapshot: {0}")]
    Snapshot(#[from] SnapshotError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic {0:?}, expected \"ELBM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated: expected {expected} more bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("field dimensions {found} do not match header {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("field name longer than 255 bytes")]
    NameTooLong,
}
