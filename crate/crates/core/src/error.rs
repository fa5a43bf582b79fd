use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("axis {axis} out of range for tensor of rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("function is not deterministic: re-evaluation gave {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("alignment conflict at frame {0}: both monolingual streams are non-blank")]
    Conflict(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no alignment of {labels} labels fits in {frames} frames (needs {required})")]
    Infeasible {
        frames: usize,
        labels: usize,
        required: usize,
    },
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),
    #[error("invalid label id {0}")]
    InvalidLabel(usize),

    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("fingerprint mismatch: checkpoint was written for\n{found}\nbut config expects\n{expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),
    #[error("corpus language violation in utterance `{utt}`: unit `{unit}` is not {expected:?}")]
    LanguageViolation {
        utt: String,
        unit: String,
        expected: crate::alignments::Language,
    },
    #[error("unsupported for this model variant: {0}")]
    UnsupportedVariant(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("feature file for utterance `{utt}` ({path}): {msg}")]
    FeatureFile {
        utt: String,
        path: PathBuf,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
