//! Translation and alignment quality: corpus BLEU, AER, soft AER over
//! attention matrices, and automated over/under-translation proxies.

mod aer;
mod alignment;
mod bleu;
mod diagnostics;

pub use aer::{aer, corpus_aer, corpus_saer, saer, SoftAlignmentMatrix};
pub use alignment::{parse_alignment_blocks, write_alignment_blocks, AlignmentReference, Link};
pub use bleu::{bleu, sentence_bleu};
pub use diagnostics::{
    coverage_diagnostics, mean_diagnostics, repetition_rate, CoverageDiagnostics, CoverageUnits,
    DiagnosticsInput, DEFICIT_THRESHOLD, EXCESS_THRESHOLD,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("BLEU needs a non-empty corpus")]
    EmptyCorpus,
    #[error("{candidates} candidates but {references} references")]
    CorpusLength {
        candidates: usize,
        references: usize,
    },
    #[error("alignment link {link} lies outside a {rows}x{cols} matrix")]
    LinkOutOfBounds {
        link: String,
        rows: usize,
        cols: usize,
    },
    #[error("soft alignment matrix is invalid: {0}")]
    BadMatrix(String),
    #[error("alignment file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Aggregate scores written by the `score` command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saer: Option<f64>,
    /// Always `"sum-of-entries/elementwise-product"` when `saer` is present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saer_interpretation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<CoverageDiagnostics>,
    pub sentences: usize,
}
