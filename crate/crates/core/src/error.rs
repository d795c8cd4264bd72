use thiserror::Error;

/// Errors raised by the multiphase model and its analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("at least 3 basis phases are required, got {0}")]
    TooFewPhases(usize),
    #[error("amplitude {0} exceeds full scale")]
    AmplitudeOverRange(f64),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("resolution of {bits} bits exceeds the limit of {max}")]
    BitsOutOfRange { bits: u32, max: u32 },
    #[error("sector index {sector} out of range for {phases} phases")]
    SectorOutOfRange { sector: usize, phases: usize },
    #[error("weights ({n1}, {n2}) exceed full scale {full_scale}")]
    WeightsOverRange { n1: u64, n2: u64, full_scale: u64 },
    #[error("efficiency is undefined at zero output power")]
    ZeroOutput,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("network Q mismatch: supplied {supplied}, derived {derived}")]
    QualityMismatch { supplied: f64, derived: f64 },
    #[error("beam weight not latched")]
    BeamNotLatched,
    #[error("code {code} does not fit in {bits} bits")]
    CodeOverRange { code: u64, bits: u32 },
    #[error("measured table for element {element} does not cover phase code {code}")]
    TableCoverage { element: usize, code: f64 },
    #[error("pattern grids do not match: {0}")]
    GridMismatch(String),
    #[error("unsupported modulation order {0}")]
    UnsupportedOrder(usize),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
