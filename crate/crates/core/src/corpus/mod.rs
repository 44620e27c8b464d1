//! Vocabularies, parallel text I/O, synthetic fertility-structured toy tasks,
//! and batching.

mod batch;
mod io;
mod toy;
mod vocab;

pub use batch::{batch_iter, Batch, PaddedBatch};
pub use io::{encode_pairs, read_lines, read_parallel, write_lines, DEFAULT_MAX_LEN};
pub use toy::{gen_toy_corpus, ToyCorpus, ToyPair, ToyTaskSpec};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("vocabulary cap {0} is below the minimum of 5")]
    CapTooSmall(usize),
    #[error("vocabulary file line {line}: {reason}")]
    VocabFormat { line: usize, reason: String },
    #[error("invalid toy task spec: {0}")]
    ToySpec(String),
    #[error(
        "parallel files differ in length: {source_lines} source vs {target_lines} target lines"
    )]
    ParallelMismatch {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("batch size must be at least 1")]
    BatchSize,
    #[error("{path}: {err}")]
    Io {
        path: String,
        #[source]
        err: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Source and target id sequences, each terminated by `EOS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl SentencePair {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Self {
        Self { source, target }
    }
}
