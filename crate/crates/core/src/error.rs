use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal set")]
    EmptySet,
    #[error("common overlap of {overlap_s:.1} s is below the {min_s:.0} s minimum")]
    NoOverlap { overlap_s: f64, min_s: f64 },
    #[error("sample rate mismatch after ingestion: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("signal too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error(
        "unstable filter design: passband {low_hz}-{high_hz} Hz violates Nyquist at {rate_hz} Hz"
    )]
    UnstableDesign {
        low_hz: f64,
        high_hz: f64,
        rate_hz: f64,
    },
    #[error("zero variance segment")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no segments passed the triangle gate")]
    NoCleanSegments,
    #[error("no beats detected on the reference channel")]
    NoReferenceBeats,
    #[error("whitening failed: input channels are rank deficient")]
    SingularWhitening,
    #[error("HR series window grids do not match")]
    GridMismatch,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot infer a stable sample rate from timestamps: {0}")]
    RateInference(String),
    #[error("unrecoverable NaN gap of {gap_s:.3} s (limit {limit_s:.3} s)")]
    NanGap { gap_s: f64, limit_s: f64 },
    #[error("unknown site label '{0}'")]
    UnknownSite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
