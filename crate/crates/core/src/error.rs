use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report, grouped roughly by stage.
#[derive(Debug, Error)]
pub enum Error {
    // model
    #[error("unknown channel label `{0}`")]
    UnknownChannel(String),
    #[error("invalid montage: {0}")]
    InvalidMontage(String),
    #[error("channel `{0}` listed twice")]
    DuplicateChannel(String),
    #[error("invalid band `{name}`: [{lo}, {hi}] Hz")]
    InvalidBand { name: String, lo: f64, hi: f64 },
    #[error("invalid epoch set: {0}")]
    InvalidEpochSet(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // dsp
    #[error("upsampling from {from} Hz to {to} Hz is not supported")]
    UpsamplingUnsupported { from: f64, to: f64 },
    #[error("unsupported resampling ratio {from} Hz -> {to} Hz")]
    UnsupportedRatio { from: f64, to: f64 },
    #[error("band edge {edge} Hz is not below Nyquist ({nyquist} Hz)")]
    BandAboveNyquist { edge: f64, nyquist: f64 },
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("epoch for trial {0} falls outside the recording")]
    EpochOutOfBounds(usize),
    #[error("all {0} trials exceeded the artifact threshold")]
    AllTrialsRejected(usize),

    // phase / plv
    #[error("epoch has {0} samples per trial, at least 64 are required")]
    EmptyEpoch(usize),
    #[error("PLV requested between channel {0} and itself")]
    SameChannel(usize),
    #[error("PLV needs at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("time window [{start_ms}, {end_ms}] ms lies outside the epoch")]
    WindowOutOfBounds { start_ms: f64, end_ms: f64 },
    #[error("channel index {index} out of range for {count} channels")]
    ChannelIndex { index: usize, count: usize },

    // regions / stats
    #[error("region needs at least 2 channels, got {0}")]
    RegionTooSmall(usize),
    #[error("region is empty")]
    EmptyRegion,
    #[error("paired samples differ in length ({0} vs {1}) or have fewer than 2 entries")]
    SampleSize(usize, usize),
    #[error("subject `{subject}` lacks a `{condition}` matrix")]
    MissingCondition { subject: String, condition: String },

    // synth
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("coupling strength {0} outside [0, 1]")]
    CouplingOutOfRange(f64),

    // io
    #[error("malformed container header: {0}")]
    MalformedHeader(String),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("incomplete results: {0}")]
    IncompleteResults(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no subjects found in {0}")]
    NoSubjects(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A failure inside one pipeline stage, tagged with the stage and the input it was processing.
    #[error("stage `{stage}` failed on {input}: {source}")]
    Stage {
        stage: &'static str,
        input: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit status: 1 for invalid configuration or input, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::InvalidSpec(_)
            | Error::CouplingOutOfRange(_)
            | Error::NoSubjects(_)
            | Error::InvalidEpochSet(_)
            | Error::InvalidBand { .. }
            | Error::InvalidMontage(_)
            | Error::UnknownChannel(_)
            | Error::DuplicateChannel(_)
            | Error::BandAboveNyquist { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, input: impl Into<String>) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                input: input.into(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
