use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: timestamp goes backwards within trial {trial_id}")]
    NonMonotonicTime {
        path: PathBuf,
        line: usize,
        trial_id: String,
    },
    #[error("unknown stimulus emotion {0:?}")]
    UnknownEmotion(String),
    #[error("{path}:{line}: expected 68 landmark points, found {found}")]
    WrongPointCount {
        path: PathBuf,
        line: usize,
        found: usize,
    },
    #[error("trial {0} has no landmark frames")]
    MissingTrial(String),
    #[error("trial {trial_id} references unknown participant {participant_id}")]
    OrphanTrial {
        trial_id: String,
        participant_id: String,
    },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("screen dimensions must be positive")]
    ZeroScreenDimension,
    #[error("participant {0} has no neutral-stimulus trial with a valid sample")]
    NoNeutralTrials(String),
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("window spans zero time")]
    DegenerateWindow,

    #[error("rating {0} outside 1..=9")]
    OutOfRangeRating(i64),
    #[error("personality score {0} outside 0..=50")]
    OutOfRangeTrait(f64),

    #[error("input is constant")]
    ConstantInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("REML search failed to converge in log(1+lambda) bracket [{lo}, {hi}]")]
    ConvergenceFailure { lo: f64, hi: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("clip {0} has fewer than two raters")]
    InsufficientRaters(String),

    #[error("class {0} has no examples")]
    EmptyClass(usize),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {0} (non-finite loss)")]
    DivergenceDetected(usize),
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
