//! Maximum-likelihood training with teacher forcing, the optional fertility
//! penalty, global-norm clipping and Adadelta/SGD updates.

mod optim;
mod report;

pub use optim::{clip_gradients, Optimizer, OptimizerState};
pub use report::{EpochStats, TrainReport};

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{AttentionRecord, CoverageState};
use crate::corpus::{batch_iter, CorpusError, PaddedBatch, SentencePair};
use crate::model::{ModelError, Net, ParameterStore};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{path}: {err}")]
    Io {
        path: String,
        #[source]
        err: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Adadelta decay.
    pub rho: f64,
    /// Adadelta conditioning constant, inside both square roots.
    pub epsilon: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement tolerated before stopping.
    pub patience: usize,
    /// Weight of the fertility penalty.
    pub lambda: f64,
    pub seed: u64,
    /// Stop as soon as per-token dev NLL falls below this value.
    pub target_dev_nll: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adadelta,
            learning_rate: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
            clip_norm: 1.0,
            batch_size: 16,
            max_epochs: 300,
            patience: 10,
            lambda: 0.0,
            seed: 42,
            target_dev_nll: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return bad("lambda must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return bad("learning_rate must be non-negative");
        }
        if !(0.0..1.0).contains(&self.rho) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("rho must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|err| TrainError::Io {
            path: path.display().to_string(),
            err,
        })?;
        Self::from_json(&text)
    }
}

/// Tape nodes of one teacher-forced sentence.
#[derive(Debug, Clone, Copy)]
pub struct SequenceGraph {
    /// `−Σ_i log P(y_i | y_<i, x)`.
    pub nll: Var,
    /// Stacked attention weights, `I × J`.
    pub alpha: Var,
    pub coverage: Option<Var>,
    pub fertility: Option<Var>,
    pub logits: Var,
}

/// Runs the decoder under teacher forcing. `source_mask`/`target_weights`
/// describe padding; `None` means every position is real.
pub fn sequence_graph(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    source: &[usize],
    target: &[usize],
    source_mask: Option<&[bool]>,
    target_weights: Option<&[f64]>,
) -> Result<SequenceGraph, ModelError> {
    if target.is_empty() {
        return Err(ModelError::Config("empty target sentence".into()));
    }
    let (ctx, mut state) = net.start(tape, source, source_mask)?;
    let mut alphas = Vec::with_capacity(target.len());
    let mut readouts = Vec::with_capacity(target.len());
    for y_prev in Net::shifted(target) {
        let out = net.step(tape, &ctx, &state, y_prev)?;
        alphas.push(out.alpha);
        readouts.push(out.readout);
        state = out.state;
    }
    let readout = tape.concat_rows(&readouts)?;
    let logits = net.logits(tape, readout)?;
    let nll = tape.softmax_cross_entropy(logits, target, target_weights)?;
    if !tape.value(nll).data()[0].is_finite() {
        let l = tape.value(logits);
        let step = (0..l.rows())
            .find(|&i| !l.row_slice(i).iter().all(|v| v.is_finite()))
            .unwrap_or(0);
        return Err(ModelError::NonFiniteLoss { step });
    }
    let alpha = tape.concat_rows(&alphas)?;
    Ok(SequenceGraph {
        nll,
        alpha,
        coverage: state.coverage,
        fertility: ctx.fertility,
        logits,
    })
}

/// `Σ_j (Φ_j − Σ_i α_ij)²` with `phi` a `J × 1` column and `alpha` `I × J`.
pub fn fertility_penalty(tape: &mut Tape<'_>, phi: Var, alpha: Var) -> Result<Var, ModelError> {
    let rows = tape.value(alpha).rows();
    let ones = tape.constant(Tensor::full(&[1, rows], 1.0));
    let sums = tape.matmul(ones, alpha)?;
    let sums = tape.transpose(sums)?;
    let diff = tape.sub(phi, sums)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.sum(sq)?)
}

/// Sentence objective: NLL, plus `λ` times the fertility penalty when
/// `λ > 0`. Variants without a fertility model use `Φ ≡ 1` in the penalty.
pub fn sequence_loss(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    pair: &SentencePair,
    lambda: f64,
) -> Result<Var, ModelError> {
    let g = sequence_graph(tape, net, &pair.source, &pair.target, None, None)?;
    if lambda > 0.0 {
        let phi = match g.fertility {
            Some(phi) => phi,
            None => tape.constant(Tensor::full(&[pair.source.len(), 1], 1.0)),
        };
        let pen = fertility_penalty(tape, phi, g.alpha)?;
        let pen = tape.scale(pen, lambda)?;
        Ok(tape.add(g.nll, pen)?)
    } else {
        Ok(g.nll)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceNll {
    pub loss: f64,
    pub record: AttentionRecord,
    pub coverage: CoverageState,
    pub fertility: Option<Vec<f64>>,
}

pub fn sequence_nll(
    store: &ParameterStore,
    pair: &SentencePair,
) -> Result<SequenceNll, ModelError> {
    let mut tape = Tape::new();
    let net = Net::bind(store, &mut tape);
    let g = sequence_graph(&mut tape, &net, &pair.source, &pair.target, None, None)?;
    let cfg = store.config();
    let coverage = CoverageState {
        variant: cfg.variant,
        values: match g.coverage {
            Some(c) => tape.value(c).clone(),
            None => CoverageState::zeros(cfg.variant, pair.source.len(), cfg.cov_dim).values,
        },
        step: pair.target.len(),
    };
    Ok(SequenceNll {
        loss: tape.value(g.nll).data()[0],
        record: AttentionRecord {
            alpha: tape.value(g.alpha).clone(),
        },
        coverage,
        fertility: g.fertility.map(|f| tape.value(f).data().to_vec()),
    })
}

/// Per-row NLL of a right-padded batch, each row decoded under its masks.
pub fn padded_batch_nll(
    store: &ParameterStore,
    batch: &PaddedBatch,
) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::with_capacity(batch.source.len());
    for b in 0..batch.source.len() {
        let mut tape = Tape::new();
        let net = Net::bind(store, &mut tape);
        let weights: Vec<f64> = batch.target_mask[b]
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 })
            .collect();
        let g = sequence_graph(
            &mut tape,
            &net,
            &batch.source[b],
            &batch.target[b],
            Some(&batch.source_mask[b]),
            Some(&weights),
        )?;
        out.push(tape.value(g.nll).data()[0]);
    }
    Ok(out)
}

/// Mean batch objective and its gradient for every parameter tensor.
pub fn batch_gradients(
    store: &ParameterStore,
    batch: &[SentencePair],
    lambda: f64,
) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
    let mut grads: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut total = 0.0;
    for pair in batch {
        let mut tape = Tape::new();
        let net = Net::bind(store, &mut tape);
        let loss = sequence_loss(&mut tape, &net, pair, lambda)?;
        total += tape.value(loss).data()[0];
        let g = tape.backward(loss)?;
        for (slot, grad) in g.params() {
            if let Some(grad) = grad {
                for (acc, v) in grads[slot].iter_mut().zip(grad) {
                    *acc += v;
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads {
        g.iter_mut().for_each(|v| *v *= scale);
    }
    for slot in store.embedding_slots() {
        let cols = store.tensors()[slot].cols();
        grads[slot][crate::corpus::PAD * cols..(crate::corpus::PAD + 1) * cols].fill(0.0);
    }
    Ok((total / batch.len() as f64, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Set when the gradient was non-finite and no update was applied.
    pub skipped: bool,
}

pub fn train_step(
    store: &mut ParameterStore,
    state: &mut OptimizerState,
    batch: &[SentencePair],
    cfg: &TrainConfig,
) -> Result<StepOutcome, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Config("empty batch".into()));
    }
    let (loss, mut grads) = batch_gradients(store, batch, cfg.lambda)?;
    let grad_norm = clip_gradients(&mut grads, cfg.clip_norm);
    if !grad_norm.is_finite() {
        return Ok(StepOutcome {
            loss,
            grad_norm,
            skipped: true,
        });
    }
    state.apply(store, &grads, cfg);
    Ok(StepOutcome {
        loss,
        grad_norm,
        skipped: false,
    })
}

/// Total NLL and target-token count.
pub fn corpus_nll(
    store: &ParameterStore,
    pairs: &[SentencePair],
) -> Result<(f64, usize), ModelError> {
    let mut total = 0.0;
    let mut tokens = 0;
    for pair in pairs {
        let mut tape = Tape::new();
        let net = Net::bind(store, &mut tape);
        let g = sequence_graph(&mut tape, &net, &pair.source, &pair.target, None, None)?;
        total += tape.value(g.nll).data()[0];
        tokens += pair.target.len();
    }
    Ok((total, tokens))
}

pub fn per_token_nll(store: &ParameterStore, pairs: &[SentencePair]) -> Result<f64, ModelError> {
    let (total, tokens) = corpus_nll(store, pairs)?;
    Ok(total / tokens.max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters at the epoch with the lowest dev NLL.
    pub best: ParameterStore,
}

/// Epoch loop with seeded shuffling and early stopping on dev NLL.
///
/// `on_epoch` runs after every epoch and may stop training by returning
/// `false`.
pub fn train_loop(
    mut store: ParameterStore,
    train: &[SentencePair],
    dev: &[SentencePair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &ParameterStore) -> bool,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let dev = if dev.is_empty() { train } else { dev };
    let mut state = OptimizerState::new(&store, cfg.optimizer);
    let mut report = TrainReport::default();
    let mut best = store.clone();
    let mut best_dev = f64::INFINITY;
    let mut bad_epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut train_total = 0.0;
        let mut tokens = 0usize;
        for batch in batch_iter(train, cfg.batch_size, cfg.seed, epoch as u64)? {
            let out = train_step(&mut store, &mut state, &batch.pairs, cfg)?;
            if out.skipped {
                report.skipped_steps += 1;
            }
            train_total += out.loss * batch.pairs.len() as f64;
            tokens += batch.target_tokens();
        }
        let seconds = start.elapsed().as_secs_f64();
        let dev_nll = per_token_nll(&store, dev)?;
        let stats = EpochStats {
            epoch,
            train_nll: train_total / tokens.max(1) as f64,
            dev_nll,
            seconds,
            words_per_sec: tokens as f64 / seconds.max(1e-9),
        };
        report.epochs.push(stats.clone());
        if dev_nll < best_dev {
            best_dev = dev_nll;
            best = store.clone();
            report.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
        }
        let keep_going = on_epoch(&stats, &store);
        if !keep_going
            || bad_epochs > cfg.patience
            || cfg.target_dev_nll.is_some_and(|t| dev_nll < t)
        {
            break;
        }
    }
    Ok(TrainOutcome { report, best })
}
