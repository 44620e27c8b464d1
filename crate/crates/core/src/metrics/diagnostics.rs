use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Attention mass below this fraction of a word's due marks it under-translated.
pub const DEFICIT_THRESHOLD: f64 = 0.5;
/// Attention mass above this fraction of a word's due marks it over-translated.
pub const EXCESS_THRESHOLD: f64 = 1.5;

/// What one unit of coverage means in a [`CoverageDiagnostics`] report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageUnits {
    /// Attention mass divided by the known true fertility of each word.
    ReferenceFertility,
    /// Attention mass divided by the model's predicted fertility.
    ModelFertility,
    /// Raw attention mass (fertility taken as one).
    Unit,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsInput<'a> {
    /// Attention record; rows beyond `output.len()` (the `EOS` step) are ignored.
    pub alpha: &'a Tensor,
    /// Source words to report on; columns of `alpha` beyond it are ignored.
    pub source_len: usize,
    pub output: &'a [String],
    pub reference_fertility: Option<&'a [usize]>,
    pub model_fertility: Option<&'a [f64]>,
    /// Final linguistic coverage (`J × 1`), only for linguistic variants.
    pub linguistic_coverage: Option<&'a Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageDiagnostics {
    pub length_ratio: f64,
    pub repetition_rate: f64,
    pub coverage_deficit: f64,
    pub coverage_excess: f64,
    pub units: CoverageUnits,
    /// Deficit measured on the model's own linguistic coverage state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_coverage_deficit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_coverage_excess: Option<f64>,
}

/// Fraction of bigram occurrences that repeat an earlier bigram.
pub fn repetition_rate(tokens: &[String]) -> f64 {
    if tokens.len() < 2 {
        return 0.0;
    }
    let mut seen = HashSet::new();
    let mut repeats = 0;
    for w in tokens.windows(2) {
        if !seen.insert(w) {
            repeats += 1;
        }
    }
    repeats as f64 / (tokens.len() - 1) as f64
}

fn fractions(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let (mut low, mut high) = (0, 0);
    for v in values {
        if v < DEFICIT_THRESHOLD {
            low += 1;
        }
        if v > EXCESS_THRESHOLD {
            high += 1;
        }
    }
    (low as f64 / n as f64, high as f64 / n as f64)
}

pub fn coverage_diagnostics(input: &DiagnosticsInput<'_>) -> CoverageDiagnostics {
    let j_len = input.source_len;
    let rows = input.output.len().min(input.alpha.rows());
    let mut mass = vec![0.0; j_len];
    for i in 0..rows {
        for (m, &a) in mass.iter_mut().zip(input.alpha.row_slice(i)) {
            *m += a;
        }
    }
    let (units, due): (CoverageUnits, Vec<f64>) =
        match (input.reference_fertility, input.model_fertility) {
            (Some(f), _) => (
                CoverageUnits::ReferenceFertility,
                f.iter().map(|&x| x as f64).collect(),
            ),
            (None, Some(phi)) => (CoverageUnits::ModelFertility, phi.to_vec()),
            (None, None) => (CoverageUnits::Unit, vec![1.0; j_len]),
        };
    let normalized = mass
        .iter()
        .zip(&due)
        .map(|(m, d)| if *d > 0.0 { m / d } else { f64::INFINITY });
    let (coverage_deficit, coverage_excess) = fractions(normalized, j_len);

    let expected_len = match input.reference_fertility {
        Some(f) => f.iter().sum::<usize>(),
        None => j_len,
    };
    let length_ratio = if expected_len == 0 {
        0.0
    } else {
        input.output.len() as f64 / expected_len as f64
    };

    let (model_coverage_deficit, model_coverage_excess) = match input.linguistic_coverage {
        Some(c) => {
            let (d, e) = fractions(c.data().iter().copied(), c.len());
            (Some(d), Some(e))
        }
        None => (None, None),
    };

    CoverageDiagnostics {
        length_ratio,
        repetition_rate: repetition_rate(input.output),
        coverage_deficit,
        coverage_excess,
        units,
        model_coverage_deficit,
        model_coverage_excess,
    }
}

/// Sentence-averaged diagnostics.
pub fn mean_diagnostics(items: &[CoverageDiagnostics]) -> Option<CoverageDiagnostics> {
    let first = items.first()?;
    let n = items.len() as f64;
    let avg = |f: fn(&CoverageDiagnostics) -> f64| items.iter().map(f).sum::<f64>() / n;
    let avg_opt = |f: fn(&CoverageDiagnostics) -> Option<f64>| {
        items
            .iter()
            .map(f)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n)
    };
    Some(CoverageDiagnostics {
        length_ratio: avg(|d| d.length_ratio),
        repetition_rate: avg(|d| d.repetition_rate),
        coverage_deficit: avg(|d| d.coverage_deficit),
        coverage_excess: avg(|d| d.coverage_excess),
        units: first.units,
        model_coverage_deficit: avg_opt(|d| d.model_coverage_deficit),
        model_coverage_excess: avg_opt(|d| d.model_coverage_excess),
    })
}
