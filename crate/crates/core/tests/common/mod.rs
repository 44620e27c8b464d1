#![allow(dead_code)]

use nmt_coverage::corpus::{SentencePair, EOS};
use nmt_coverage::model::{CoverageVariant, ModelConfig, ModelError, Net, ParameterStore};
use nmt_coverage::tensor::{grad_check, GradCheckReport, Var};
use nmt_coverage::train::sequence_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gradient-check dimensions: m=8, n=12.
pub fn check_config(variant: CoverageVariant, cov_dim: usize) -> ModelConfig {
    ModelConfig {
        emb_dim: 8,
        hidden_dim: 12,
        cov_dim,
        max_fertility: 2.0,
        variant,
        src_vocab: 9,
        tgt_vocab: 9,
        max_len_factor: 2.0,
    }
}

/// Every (variant, d) combination worth checking.
pub fn variant_grid() -> Vec<(CoverageVariant, usize)> {
    let mut out = Vec::new();
    for v in CoverageVariant::ALL {
        if v.is_neural() {
            out.push((v, 1));
            out.push((v, 3));
        } else {
            out.push((v, 1));
        }
    }
    out
}

/// Initialized store with weights widened so nonlinearities are exercised
/// away from their linear regime.
pub fn lively_store(cfg: &ModelConfig, seed: u64, scale: f64) -> ParameterStore {
    let mut store = ParameterStore::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for t in store.tensors_mut() {
        for v in t.data_mut() {
            *v = *v * scale + rng.gen_range(-0.05..0.05);
        }
    }
    store
}

/// Source of `j` tokens and target of `i` tokens (both ending in EOS).
pub fn pair(j: usize, i: usize, seed: u64) -> SentencePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut src: Vec<usize> = (0..j - 1).map(|_| rng.gen_range(4..9)).collect();
    src.push(EOS);
    let mut tgt: Vec<usize> = (0..i - 1).map(|_| rng.gen_range(4..9)).collect();
    tgt.push(EOS);
    SentencePair::new(src, tgt)
}

/// Central differences over every named tensor of `store` for the sentence
/// objective with fertility-penalty weight `lambda`.
pub fn whole_model_check(
    store: &ParameterStore,
    pair: &SentencePair,
    lambda: f64,
) -> GradCheckReport {
    let cfg = store.config().clone();
    let layout = store.layout().clone();
    grad_check(
        store.tensors(),
        |tape, vars| -> Result<Var, ModelError> {
            let net = Net::from_vars(&cfg, &layout, vars.to_vec());
            sequence_loss(tape, &net, pair, lambda)
        },
        1e-3,
        1e-4,
    )
}
