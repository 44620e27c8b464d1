use std::collections::HashMap;

use super::MetricsError;

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn fold(sentence: &[String]) -> Vec<String> {
    sentence.iter().map(|t| t.to_lowercase()).collect()
}

/// Per-order clipped matches and totals plus candidate/reference lengths.
fn statistics(
    candidate: &[String],
    reference: &[String],
) -> ([usize; MAX_ORDER], [usize; MAX_ORDER], usize, usize) {
    let (c, r) = (fold(candidate), fold(reference));
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let ref_counts = ngram_counts(&r, n);
        for (gram, count) in ngram_counts(&c, n) {
            matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
        }
        totals[n - 1] = c.len().saturating_sub(n - 1);
    }
    (matches, totals, c.len(), r.len())
}

fn combine(
    matches: &[usize; MAX_ORDER],
    totals: &[usize; MAX_ORDER],
    cand_len: usize,
    ref_len: usize,
    smooth: bool,
) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        let (m, t) = if smooth && n > 0 {
            (matches[n] as f64 + 1.0, totals[n] as f64 + 1.0)
        } else {
            (matches[n] as f64, totals[n] as f64)
        };
        if m == 0.0 || t == 0.0 {
            return 0.0;
        }
        log_sum += (m / t).ln();
    }
    let bp = (1.0 - ref_len as f64 / cand_len as f64).exp().min(1.0);
    bp * (log_sum / MAX_ORDER as f64).exp()
}

/// Case-insensitive corpus-level 4-gram BLEU with one reference per
/// candidate and no smoothing.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::CorpusLength {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        let (m, t, cl, rl) = statistics(c, r);
        for n in 0..MAX_ORDER {
            matches[n] += m[n];
            totals[n] += t[n];
        }
        c_len += cl;
        r_len += rl;
    }
    Ok(combine(&matches, &totals, c_len, r_len, false))
}

/// Sentence BLEU with add-one smoothing on 2..4-gram precisions; for
/// per-sentence diagnostics only.
pub fn sentence_bleu(candidate: &[String], reference: &[String]) -> f64 {
    let (m, t, cl, rl) = statistics(candidate, reference);
    combine(&m, &t, cl, rl, true)
}
