use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report.
///
/// Variants are grouped by the stage that raises them; the CLI maps them onto
/// exit codes through [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    // image io
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("rectangle lies entirely outside the image")]
    EmptyRectangle,

    // features
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("descriptor window at ({x:.1}, {y:.1}) scale {scale:.2} leaves the image")]
    WindowOutOfBounds { x: f64, y: f64, scale: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    // vocabulary
    #[error("image {0} has no descriptors")]
    EmptyImage(String),
    #[error("need at least {needed} descriptors, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("k = {k} exceeds the {distinct} distinct points")]
    TooFewPoints { k: usize, distinct: usize },
    #[error("non-finite value in input")]
    NonFiniteInput,

    // encoding / classifier / retrieval
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("class {0} has no training examples")]
    MissingClass(String),
    #[error("input contains zero feature vectors")]
    DegenerateInput,
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("query produced no descriptors")]
    DegenerateQuery,
    #[error("index is empty")]
    EmptyIndex,

    // evaluation
    #[error("class {class} has {count} image(s); at least 2 required")]
    ClassTooSmall { class: String, count: usize },
    #[error("need {needed} results, got {got}")]
    InsufficientResults { needed: usize, got: usize },
    #[error("no queries to average")]
    NoQueries,

    // artifacts
    #[error("malformed artifact {what}: {detail}")]
    ArtifactFormat { what: String, detail: String },
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    ArtifactMismatch,
    DegenerateQuery,
    Usage,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::ArtifactMismatch(_) | Error::ArtifactFormat { .. } => ErrorKind::ArtifactMismatch,
            Error::DegenerateQuery => ErrorKind::DegenerateQuery,
            Error::Config(_) | Error::InvalidParams(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptImage(_) => "CorruptImage",
            Error::EmptyRectangle => "EmptyRectangle",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::WindowOutOfBounds { .. } => "WindowOutOfBounds",
            Error::InvalidParams(_) => "InvalidParams",
            Error::EmptyImage(_) => "EmptyImage",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::SingleClass => "SingleClass",
            Error::MissingClass(_) => "MissingClass",
            Error::DegenerateInput => "DegenerateInput",
            Error::NonFiniteLoss => "NonFiniteLoss",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DegenerateQuery => "DegenerateQuery",
            Error::EmptyIndex => "EmptyIndex",
            Error::ClassTooSmall { .. } => "ClassTooSmall",
            Error::InsufficientResults { .. } => "InsufficientResults",
            Error::NoQueries => "NoQueries",
            Error::ArtifactFormat { .. } => "ArtifactFormat",
            Error::ArtifactMismatch(_) => "ArtifactMismatch",
            Error::Config(_) => "Config",
            Error::Stage { source, .. } => source.code(),
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// Pipeline stage that raised the error, if it was tagged with one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
