use std::path::PathBuf;

use crate::pruning::PruneHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported rate conversion {from} Hz -> {to} Hz (integer decimation only)")]
    UnsupportedRate { from: u32, to: u32 },

    #[error("signal of {len} samples is shorter than one frame of {frame} samples")]
    TooShortSignal { len: usize, frame: usize },

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("degenerate filterbank: bank {bank} of {num_banks} covers no spectrum bins")]
    DegenerateFilterbank { bank: usize, num_banks: usize },

    #[error("feature pipeline failure: {0}")]
    PipelineFailure(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("manifest format: {0}")]
    ManifestFormat(String),

    #[error("i/o error on {}{}: {source}", path.display(), row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Io {
        path: PathBuf,
        row: Option<usize>,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {}: {message}", path.display())]
    Wav { path: PathBuf, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("group imbalance: {0}")]
    Imbalance(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("model spec violates architecture invariant: {0}")]
    SpecInvariant(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("training failure: {0}")]
    TrainingFailure(String),

    #[error("pruning failure: {reason}")]
    PruningFailure {
        reason: String,
        history: Box<PruneHistory>,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-positive performance (group {group}, overall {overall}): log-ratio undefined")]
    NonPositivePerformance { group: f64, overall: f64 },

    #[error("group coverage: {0}")]
    GroupCoverage(String),

    #[error("report comparison: {0}")]
    Comparison(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("summary error: {0}")]
    Summary(String),

    #[error("baseline checkpoint missing: {0}")]
    MissingBaseline(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            row: None,
            source,
        }
    }

    /// Short machine-readable tag, used for `failed:<reason>` statuses.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedRate { .. } => "unsupported-rate",
            Error::TooShortSignal { .. } => "too-short-signal",
            Error::InvalidLength(_) => "invalid-length",
            Error::InvalidSignal(_) => "invalid-signal",
            Error::DegenerateFilterbank { .. } => "degenerate-filterbank",
            Error::PipelineFailure(_) => "pipeline-failure",
            Error::InvalidConfig(_) => "invalid-config",
            Error::ManifestFormat(_) => "manifest-format",
            Error::Io { .. } => "io",
            Error::Wav { .. } => "wav",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Imbalance(_) => "imbalance",
            Error::Shape(_) => "shape",
            Error::SpecInvariant(_) => "spec-invariant",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::TrainingFailure(_) => "training-failure",
            Error::PruningFailure { .. } => "pruning-failure",
            Error::Label(_) => "label",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::NonPositivePerformance { .. } => "non-positive-performance",
            Error::GroupCoverage(_) => "group-coverage",
            Error::Comparison(_) => "comparison",
            Error::Selection(_) => "selection",
            Error::Grid(_) => "grid",
            Error::Summary(_) => "summary",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingBaseline(_) => "missing-baseline",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
