use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("gradient requested for non-scalar output of shape {0:?}")]
    NonScalarOutput([usize; 2]),

    #[error("variable {0} does not belong to this tape")]
    ForeignVar(usize),

    #[error("segment {0} has no elements")]
    EmptySegment(usize),

    #[error("batch norm needs at least one row")]
    EmptyBatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("t = {0} is outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("mutual information undefined: denominator {denominator:.6e} <= 0 at r = {r}, snr = {snr} (correlation is not positive semidefinite on this ball)")]
    NonPositiveDenominator { r: f64, snr: f64, denominator: f64 },

    #[error("no sign change of the radius derivative on [{lo}, {hi}] for snr = {snr}")]
    NoSignChange { lo: f64, hi: f64, snr: f64 },

    #[error("reaction-diffusion diverged at step {step} (|field| > 1e6) under the {convention} sign convention")]
    Diverged { step: usize, convention: &'static str },

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
