use hed_core::corpus::{AlignmentError, ContainerError, CorpusError};
use hed_core::dsp::DspError;
use hed_core::eval::EvalError;
use hed_core::hed::HedError;
use hed_core::intensity::IntensityError;
use hed_core::ttscore::TtsError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("config: {0}")]
    Config(String),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    /// A required artifact from an earlier step is missing.
    #[error("{0}")]
    Precondition(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Hed(#[from] HedError),
    #[error(transparent)]
    Tts(#[from] TtsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "config",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Precondition(_) => "precondition",
            ServiceError::Invalid(_) => "invalid_argument",
            ServiceError::Corpus(_) => "corpus",
            ServiceError::Alignment(_) => "alignment",
            ServiceError::Container(_) => "container",
            ServiceError::Dsp(_) => "dsp",
            ServiceError::Intensity(_) => "intensity",
            ServiceError::Hed(_) => "hed",
            ServiceError::Tts(_) => "tts",
            ServiceError::Eval(_) => "eval",
            ServiceError::Json(_) => "json",
            ServiceError::Io(_) => "io",
        }
    }

    /// Machine-readable form written to stderr by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
