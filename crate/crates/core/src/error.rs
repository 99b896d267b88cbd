use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("multi-tone spec needs at least one tone")]
    NoTones,

    #[error("tone {index} at {frequency} Hz is not below the Nyquist limit of {nyquist} Hz")]
    ToneAboveNyquist {
        index: usize,
        frequency: f64,
        nyquist: f64,
    },

    #[error("signal has zero RMS and cannot be normalized")]
    ZeroRms,

    #[error("delay of {delay} steps is invalid for a series of length {len}")]
    InvalidDelay { delay: usize, len: usize },

    #[error("NARMA order {order} is invalid for a series of length {len}")]
    InvalidNarmaOrder { order: usize, len: usize },

    #[error("NARMA recurrence diverged at index {index} (|y| = {value:e})")]
    NarmaDiverged { index: usize, value: f64 },

    #[error("sensor index {index} out of range for {count} sensors")]
    SensorOutOfRange { index: usize, count: usize },

    #[error("series too short: need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("invalid lattice configuration: {0}")]
    InvalidLattice(String),

    #[error("drive node {0} is clamped")]
    DriveNodeClamped(usize),

    #[error("forcing sample rate {forcing} Hz does not match output rate {output} Hz")]
    RateMismatch { forcing: f64, output: f64 },

    #[error(
        "simulation unstable at step {step} (t = {time:.6} s); retry with dt <= {suggested_dt:e} s"
    )]
    Unstable {
        step: usize,
        time: f64,
        suggested_dt: f64,
    },

    #[error("invalid state matrix: {0}")]
    InvalidState(String),

    #[error("trim fractions head={head}, tail={tail} leave {remaining} samples of {len}")]
    InvalidTrim {
        head: f64,
        tail: f64,
        remaining: usize,
        len: usize,
    },

    #[error("train fraction {frac} leaves an empty partition of {len} samples")]
    InvalidSplit { frac: f64, len: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-finite value at row {row}, sensor '{sensor}'")]
    NonFinite { row: usize, sensor: String },

    #[error("duplicate sensor id '{0}'")]
    DuplicateSensor(String),

    #[error("metadata {0} is missing sample_rate_hz")]
    MissingSampleRate(PathBuf),

    #[error("metadata has no entry for sensor '{0}'")]
    MissingSensorMeta(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("state matrix is rank deficient (all sensors constant) and ridge is zero")]
    RankDeficient,

    #[error("sensor mismatch: missing {missing:?}, extra {extra:?}")]
    SensorMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("signal '{0}' is constant; correlation is undefined")]
    ConstantSignal(String),

    #[error("frequency analysis needs an even sample count of at least 4, got {0}")]
    OddLength(usize),

    #[error("task has zero spectral energy")]
    ZeroEnergyTask,

    #[error("frequency content is identically zero")]
    EmptyContent,

    #[error("subset size {size} is invalid for {count} sensors")]
    InvalidSubsetSize { size: usize, count: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed (config {fingerprint}): {source}")]
    Stage {
        stage: &'static str,
        fingerprint: String,
        #[source]
        source: Box<Error>,
    },

    #[error("bundle verification failed: {0:?}")]
    Verification(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
