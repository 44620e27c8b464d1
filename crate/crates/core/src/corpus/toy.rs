use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::metrics::{AlignmentReference, Link};
use crate::seed::{self, Stream};

fn default_min_len() -> usize {
    3
}

fn default_max_len() -> usize {
    8
}

/// Synthetic transduction task with known per-token fertility.
///
/// Source token `w{k}` has fertility `fertility_classes[k % len]` and emits
/// the target tokens `w{k}_1 … w{k}_{f}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyTaskSpec {
    pub alphabet_size: usize,
    pub fertility_classes: Vec<usize>,
    pub reversed: bool,
    pub noise: f64,
    pub size: usize,
    pub seed: u64,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

impl ToyTaskSpec {
    /// Noiseless monotone copy task (every token has fertility 1).
    pub fn copy(alphabet_size: usize, size: usize, seed: u64) -> Self {
        Self {
            alphabet_size,
            fertility_classes: vec![1],
            reversed: false,
            noise: 0.0,
            size,
            seed,
            min_len: default_min_len(),
            max_len: default_max_len(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::ToySpec(m.to_string()));
        if self.fertility_classes.is_empty() {
            return bad("fertility_classes is empty");
        }
        if self
            .fertility_classes
            .iter()
            .any(|&c| !(1..=3).contains(&c))
        {
            return bad("fertility classes must lie in 1..=3");
        }
        if self.alphabet_size < self.fertility_classes.len() {
            return bad("alphabet is smaller than the number of fertility classes");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("require 1 <= min_len <= max_len");
        }
        Ok(())
    }

    pub fn fertility(&self, token: usize) -> usize {
        self.fertility_classes[token % self.fertility_classes.len()]
    }

    /// Expected fertility of a uniformly drawn source token.
    pub fn mean_fertility(&self) -> f64 {
        (0..self.alphabet_size)
            .map(|k| self.fertility(k) as f64)
            .sum::<f64>()
            / self.alphabet_size as f64
    }

    fn target_alphabet(&self) -> Vec<String> {
        (0..self.alphabet_size)
            .flat_map(|k| (1..=self.fertility(k)).map(move |c| format!("w{k}_{c}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// Ground-truth fertility of each source position.
    pub fertility: Vec<usize>,
    /// Generating source position for each target position.
    pub links: Vec<Link>,
}

impl ToyPair {
    pub fn reference(&self) -> AlignmentReference {
        AlignmentReference::sure_only(self.links.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub pairs: Vec<ToyPair>,
}

impl ToyCorpus {
    pub fn sources(&self) -> Vec<Vec<String>> {
        self.pairs.iter().map(|p| p.source.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<String>> {
        self.pairs.iter().map(|p| p.target.clone()).collect()
    }

    pub fn references(&self) -> Vec<AlignmentReference> {
        self.pairs.iter().map(ToyPair::reference).collect()
    }
}

pub fn gen_toy_corpus(spec: &ToyTaskSpec) -> Result<ToyCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, Stream::Data, 0);
    let mut noise_rng = seed::rng(spec.seed, Stream::Noise, 0);
    let alphabet = spec.target_alphabet();
    let mut pairs = Vec::with_capacity(spec.size);
    for _ in 0..spec.size {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let ids: Vec<usize> = (0..len)
            .map(|_| rng.gen_range(0..spec.alphabet_size))
            .collect();
        let mut emitted: Vec<(String, usize)> = Vec::new();
        for (j, &k) in ids.iter().enumerate() {
            for c in 1..=spec.fertility(k) {
                emitted.push((format!("w{k}_{c}"), j));
            }
        }
        if spec.reversed {
            emitted.reverse();
        }
        let mut target = Vec::with_capacity(emitted.len());
        let mut links = Vec::with_capacity(emitted.len());
        for (i, (tok, j)) in emitted.into_iter().enumerate() {
            let tok = if spec.noise > 0.0 && noise_rng.gen_bool(spec.noise) {
                alphabet[noise_rng.gen_range(0..alphabet.len())].clone()
            } else {
                tok
            };
            target.push(tok);
            links.push(Link { tgt: i, src: j });
        }
        pairs.push(ToyPair {
            source: ids.iter().map(|k| format!("w{k}")).collect(),
            fertility: ids.iter().map(|&k| spec.fertility(k)).collect(),
            target,
            links,
        });
    }
    Ok(ToyCorpus { pairs })
}
