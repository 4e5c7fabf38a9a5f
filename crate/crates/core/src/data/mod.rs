//! Treebank input/output, vocabularies and attachment-score evaluation.

pub mod conllx;
pub mod eval;
pub mod vocab;

pub use conllx::{read_conllx, write_conllx, Sentence, Token};
pub use eval::{evaluate, Evaluation, PunctuationPolicy};
pub use vocab::{TokenIds, Vocab};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence {sentence}, token {token}: no predicted head")]
    MissingPrediction { sentence: usize, token: usize },
    #[error("sentence {sentence}, token {token}: no gold head")]
    MissingGold { sentence: usize, token: usize },
    #[error("sentence {sentence}: gold has {gold} tokens, prediction has {pred}")]
    LengthMismatch {
        sentence: usize,
        gold: usize,
        pred: usize,
    },
    #[error("corpus sizes differ: {gold} gold sentences, {pred} predicted")]
    CorpusMismatch { gold: usize, pred: usize },
}
