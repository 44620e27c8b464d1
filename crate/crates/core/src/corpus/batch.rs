use rand::seq::SliceRandom;

use super::{CorpusError, SentencePair, PAD};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pairs: Vec<SentencePair>,
}

/// Right-padded view of a batch. Masks are `true` on real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub source: Vec<Vec<usize>>,
    pub source_mask: Vec<Vec<bool>>,
    pub target: Vec<Vec<usize>>,
    pub target_mask: Vec<Vec<bool>>,
}

fn pad(rows: impl Iterator<Item = Vec<usize>> + Clone) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let width = rows.clone().map(|r| r.len()).max().unwrap_or(0);
    rows.map(|mut r| {
        let mask = (0..width).map(|k| k < r.len()).collect();
        r.resize(width, PAD);
        (r, mask)
    })
    .unzip()
}

impl Batch {
    pub fn padded(&self) -> PaddedBatch {
        let (source, source_mask) = pad(self.pairs.iter().map(|p| p.source.clone()));
        let (target, target_mask) = pad(self.pairs.iter().map(|p| p.target.clone()));
        PaddedBatch {
            source,
            source_mask,
            target,
            target_mask,
        }
    }

    pub fn target_tokens(&self) -> usize {
        self.pairs.iter().map(|p| p.target.len()).sum()
    }
}

/// Seeded shuffle of `pairs` for `epoch`, cut into batches of `batch_size`.
pub fn batch_iter(
    pairs: &[SentencePair],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>, CorpusError> {
    if batch_size == 0 {
        return Err(CorpusError::BatchSize);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Shuffle, epoch));
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch {
            pairs: chunk.iter().map(|&i| pairs[i].clone()).collect(),
        })
        .collect())
}
