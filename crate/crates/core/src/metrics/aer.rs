use std::collections::BTreeSet;

use super::{AlignmentReference, Link, MetricsError};
use crate::tensor::Tensor;

/// Non-negative `I × J` (target × source) alignment matrix whose rows sum to
/// at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAlignmentMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SoftAlignmentMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MetricsError> {
        if data.len() != rows * cols {
            return Err(MetricsError::BadMatrix(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricsError::BadMatrix(
                "entries must be finite and non-negative".into(),
            ));
        }
        for r in 0..rows {
            let s: f64 = data[r * cols..(r + 1) * cols].iter().sum();
            if s > 1.0 + 1e-9 {
                return Err(MetricsError::BadMatrix(format!("row {r} sums to {s}")));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self, MetricsError> {
        let (r, c) = t
            .dims2()
            .map_err(|e| MetricsError::BadMatrix(e.to_string()))?;
        Self::new(r, c, t.data().to_vec())
    }

    /// 0/1 indicator of `links`.
    pub fn indicator(
        rows: usize,
        cols: usize,
        links: &BTreeSet<Link>,
    ) -> Result<Self, MetricsError> {
        let mut data = vec![0.0; rows * cols];
        for l in links {
            check_bounds(l, rows, cols)?;
            data[l.tgt * cols + l.src] = 1.0;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, tgt: usize, src: usize) -> f64 {
        self.data[tgt * self.cols + src]
    }

    /// Sum of all entries.
    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Entry sum of the elementwise product with the indicator of `links`.
    fn overlap(&self, links: &BTreeSet<Link>) -> f64 {
        links.iter().map(|l| self.at(l.tgt, l.src)).sum()
    }
}

fn check_bounds(l: &Link, rows: usize, cols: usize) -> Result<(), MetricsError> {
    if l.tgt >= rows || l.src >= cols {
        return Err(MetricsError::LinkOutOfBounds {
            link: l.to_string(),
            rows,
            cols,
        });
    }
    Ok(())
}

struct Counts {
    a_s: f64,
    a_p: f64,
    a: f64,
    s: f64,
}

impl Counts {
    fn rate(&self) -> f64 {
        let denom = self.a + self.s;
        if denom == 0.0 {
            0.0
        } else {
            1.0 - (self.a_s + self.a_p) / denom
        }
    }
}

fn hard_counts(links: &BTreeSet<Link>, reference: &AlignmentReference) -> Counts {
    Counts {
        a_s: links.intersection(reference.sure()).count() as f64,
        a_p: links.intersection(reference.possible()).count() as f64,
        a: links.len() as f64,
        s: reference.sure().len() as f64,
    }
}

fn soft_counts(
    m: &SoftAlignmentMatrix,
    reference: &AlignmentReference,
) -> Result<Counts, MetricsError> {
    for l in reference.possible() {
        check_bounds(l, m.rows, m.cols)?;
    }
    Ok(Counts {
        a_s: m.overlap(reference.sure()),
        a_p: m.overlap(reference.possible()),
        a: m.mass(),
        s: reference.sure().len() as f64,
    })
}

/// `1 − (|A∩S| + |A∩P|) / (|A| + |S|)`; zero when both `A` and `S` are empty.
pub fn aer(links: &BTreeSet<Link>, reference: &AlignmentReference) -> f64 {
    hard_counts(links, reference).rate()
}

/// Soft AER over an attention matrix: `|M|` is the entry sum and `×` the
/// elementwise product.
pub fn saer(m: &SoftAlignmentMatrix, reference: &AlignmentReference) -> Result<f64, MetricsError> {
    Ok(soft_counts(m, reference)?.rate())
}

fn pool(counts: impl Iterator<Item = Counts>) -> Counts {
    counts.fold(
        Counts {
            a_s: 0.0,
            a_p: 0.0,
            a: 0.0,
            s: 0.0,
        },
        |acc, c| Counts {
            a_s: acc.a_s + c.a_s,
            a_p: acc.a_p + c.a_p,
            a: acc.a + c.a,
            s: acc.s + c.s,
        },
    )
}

/// AER with counts pooled over sentences.
pub fn corpus_aer(
    links: &[BTreeSet<Link>],
    references: &[AlignmentReference],
) -> Result<f64, MetricsError> {
    if links.len() != references.len() {
        return Err(MetricsError::CorpusLength {
            candidates: links.len(),
            references: references.len(),
        });
    }
    Ok(pool(links.iter().zip(references).map(|(a, r)| hard_counts(a, r))).rate())
}

/// SAER with counts pooled over sentences.
pub fn corpus_saer(
    matrices: &[SoftAlignmentMatrix],
    references: &[AlignmentReference],
) -> Result<f64, MetricsError> {
    if matrices.len() != references.len() {
        return Err(MetricsError::CorpusLength {
            candidates: matrices.len(),
            references: references.len(),
        });
    }
    let counts = matrices
        .iter()
        .zip(references)
        .map(|(m, r)| soft_counts(m, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pool(counts.into_iter()).rate())
}
