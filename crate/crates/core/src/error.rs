//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{origin}:{line}: {msg}")]
    Parse {
        origin: String,
        line: usize,
        msg: String,
    },

    #[error("entry \"{entry}\" references unknown attribute \"{name}\"")]
    UnknownAttribute { entry: String, name: String },

    #[error("cannot assign attributes to \"{phoneme}\": no suffix of \"{remainder}\" is in the base table")]
    UnknownPhoneme { phoneme: String, remainder: String },

    #[error("duplicate phoneme \"{phoneme}\" at position {index}")]
    DuplicatePhoneme { phoneme: String, index: usize },

    #[error("phoneme \"{phoneme}\" has an empty attribute set")]
    EmptyAttributeSet { phoneme: String },

    #[error("shape mismatch: {msg}")]
    ShapeMismatch { msg: String },

    #[error("no valid alignment: {frames} frames cannot emit {labels} labels (minimum {required}){}",
            .utterance.as_deref().map(|u| format!(" in utterance \"{u}\"")).unwrap_or_default())]
    ImpossibleAlignment {
        frames: usize,
        labels: usize,
        required: usize,
        utterance: Option<String>,
    },

    #[error("enumeration too large: {paths} paths exceeds limit {limit}")]
    TooLarge { paths: f64, limit: f64 },

    #[error("no signature registered for language \"{language}\"")]
    UnknownLanguage { language: String },

    #[error("corpus \"{language}\" has no utterances")]
    EmptyCorpus { language: String },

    #[error("all reference transcripts are empty")]
    EmptyReference,

    #[error("reports cover different test sets ({left} vs {right} reference phonemes)")]
    MismatchedTestSet { left: usize, right: usize },

    #[error("{path}: bad feature header: {msg}")]
    BadFeatureHeader { path: String, msg: String },

    #[error("utterance \"{utterance}\": transcript phoneme \"{phoneme}\" is not in the {language} inventory")]
    TranscriptPhonemeOutsideInventory {
        utterance: String,
        phoneme: String,
        language: String,
    },

    #[error("invalid checkpoint: {msg}")]
    FormatVersionMismatch { msg: String },

    #[error("infeasible synthetic spec: {msg}")]
    InfeasibleSpec { msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(origin: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch { msg: msg.into() }
    }
}
