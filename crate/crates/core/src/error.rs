use thiserror::Error;

use crate::crf::CrfError;
use crate::data::DataError;
use crate::decoder::DecodeError;
use crate::encoder::EncoderError;
use crate::scorer::ScorerError;
use crate::tree::TreeError;

/// Errors surfaced by training, parsing and checkpoint handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Crf(#[from] CrfError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("sentence {sentence}: gold annotation is not a tree: {source}")]
    InvalidGold { sentence: usize, source: TreeError },
    #[error("sentence {sentence}, token {token}: {message}")]
    GoldToken {
        sentence: usize,
        token: usize,
        message: String,
    },
    #[error("training diverged: non-finite gradient in {param}")]
    Divergence { param: String },
    #[error("non-finite loss on sentence {sentence}")]
    NonFiniteLoss { sentence: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::NonFiniteLoss { .. }
                | Error::Crf(CrfError::Inference { .. } | CrfError::NonFinite { .. })
                | Error::Decode(DecodeError::NonFinite { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
