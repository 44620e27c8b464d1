//! Greedy and beam-search decoding with per-hypothesis coverage, sequence
//! scoring and alignment extraction.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::attention::{AttentionRecord, CoverageState, SourceContext};
use crate::corpus::{SentencePair, EOS};
use crate::metrics::{Link, MetricsError, SoftAlignmentMatrix};
use crate::model::{DecodeState, ModelError, Net, ParameterStore};
use crate::tensor::{log_softmax_row, Tape, Tensor};
use crate::train::sequence_graph;

/// A partial or complete output sequence.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Emitted tokens, including the final `EOS` when finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    /// One attention row per emitted token.
    pub alpha: Vec<Vec<f64>>,
    state: DecodeState,
}

/// Result of decoding one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Output tokens without the terminating `EOS`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    /// Attention for every decoding step, including the `EOS` step.
    pub record: AttentionRecord,
    pub coverage: CoverageState,
}

struct Decoder<'c> {
    tape: Tape<'c>,
    net: Net<'c>,
    ctx: SourceContext,
    store: &'c ParameterStore,
    source_len: usize,
}

impl<'c> Decoder<'c> {
    fn new(store: &'c ParameterStore, source: &[usize]) -> Result<(Self, DecodeState), ModelError> {
        let mut tape = Tape::new();
        let net = Net::bind(store, &mut tape);
        let (ctx, state) = net.start(&mut tape, source, None)?;
        Ok((
            Self {
                tape,
                net,
                ctx,
                store,
                source_len: source.len(),
            },
            state,
        ))
    }

    /// Log-probabilities of the next token, the attention row and the
    /// successor state.
    fn expand(
        &mut self,
        state: &DecodeState,
        y_prev: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, DecodeState), ModelError> {
        let out = self.net.step(&mut self.tape, &self.ctx, state, y_prev)?;
        let logits = self.net.logits(&mut self.tape, out.readout)?;
        let logp = log_softmax_row(self.tape.value(logits).data());
        let alpha = self.tape.value(out.alpha).data().to_vec();
        Ok((logp, alpha, out.state))
    }

    fn finish(&self, hyp: Hypothesis) -> Result<Decoded, ModelError> {
        let cfg = self.store.config();
        let values = match hyp.state.coverage {
            Some(c) => self.tape.value(c).clone(),
            None => CoverageState::zeros(cfg.variant, self.source_len, cfg.cov_dim).values,
        };
        let mut tokens = hyp.tokens;
        if hyp.finished {
            tokens.pop();
        }
        Ok(Decoded {
            tokens,
            log_prob: hyp.log_prob,
            finished: hyp.finished,
            record: AttentionRecord::from_rows(&hyp.alpha, self.source_len)?,
            coverage: CoverageState {
                variant: cfg.variant,
                values,
                step: hyp.alpha.len(),
            },
        })
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Default output bound for a source of `source_len` tokens.
pub fn max_decode_len(store: &ParameterStore, source_len: usize) -> usize {
    store.config().max_decode_len(source_len)
}

/// Picks the most probable token at every step until `EOS` or `max_len`.
pub fn greedy_decode(
    store: &ParameterStore,
    source: &[usize],
    max_len: usize,
) -> Result<Decoded, ModelError> {
    let (mut dec, state) = Decoder::new(store, source)?;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        alpha: Vec::new(),
        state,
    };
    while hyp.tokens.len() < max_len {
        let prev = hyp.tokens.last().copied().unwrap_or(crate::corpus::BOS);
        let (logp, alpha, next) = dec.expand(&hyp.state, prev)?;
        let y = argmax(&logp);
        hyp.tokens.push(y);
        hyp.log_prob += logp[y];
        hyp.alpha.push(alpha);
        hyp.state = next;
        if y == EOS {
            hyp.finished = true;
            break;
        }
    }
    dec.finish(hyp)
}

/// Candidate order: higher score first, then earlier parent, then lower
/// token id.
fn rank(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Length-synchronous beam search. Finished hypotheses stay in the beam
/// unchanged and compete with live ones on total log-probability. Returns
/// up to `beam` hypotheses, best first.
pub fn beam_decode(
    store: &ParameterStore,
    source: &[usize],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Decoded>, ModelError> {
    if beam == 0 {
        return Err(ModelError::Config("beam width must be at least 1".into()));
    }
    let (mut dec, state) = Decoder::new(store, source)?;
    let mut hyps = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        alpha: Vec::new(),
        state,
    }];
    for _ in 0..max_len {
        if hyps.iter().all(|h| h.finished) {
            break;
        }
        // (score, parent, token); token usize::MAX marks a frozen finished parent.
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        let mut expansions = Vec::with_capacity(hyps.len());
        for (p, h) in hyps.iter().enumerate() {
            if h.finished {
                cands.push((h.log_prob, p, usize::MAX));
                expansions.push(None);
                continue;
            }
            let prev = h.tokens.last().copied().unwrap_or(crate::corpus::BOS);
            let (logp, alpha, next) = dec.expand(&h.state, prev)?;
            let mut order: Vec<usize> = (0..logp.len()).collect();
            order.sort_by(|&a, &b| logp[b].total_cmp(&logp[a]).then(a.cmp(&b)));
            for &y in order.iter().take(beam) {
                cands.push((h.log_prob + logp[y], p, y));
            }
            expansions.push(Some((logp, alpha, next)));
        }
        cands.sort_by(rank);
        cands.truncate(beam);
        hyps = cands
            .into_iter()
            .map(|(score, p, y)| {
                let parent = &hyps[p];
                match &expansions[p] {
                    None => parent.clone(),
                    Some((_, alpha, next)) => {
                        let mut h = parent.clone();
                        h.tokens.push(y);
                        h.log_prob = score;
                        h.alpha.push(alpha.clone());
                        h.state = *next;
                        h.finished = y == EOS;
                        h
                    }
                }
            })
            .collect();
    }
    let mut ranked: Vec<(f64, usize)> = hyps
        .iter()
        .enumerate()
        .map(|(k, h)| (h.log_prob, k))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut slots: Vec<Option<Hypothesis>> = hyps.into_iter().map(Some).collect();
    ranked
        .into_iter()
        .map(|(_, k)| dec.finish(slots[k].take().expect("each hypothesis used once")))
        .collect()
}

/// `log P(tokens | source)` by teacher forcing, independent of the search
/// code path. `tokens` may or may not end in `EOS`.
pub fn score_sequence(
    store: &ParameterStore,
    source: &[usize],
    tokens: &[usize],
) -> Result<f64, ModelError> {
    if tokens.is_empty() {
        return Ok(0.0);
    }
    let mut tape = Tape::new();
    let net = Net::bind(store, &mut tape);
    let g = sequence_graph(&mut tape, &net, source, tokens, None, None)?;
    Ok(-tape.value(g.nll).data()[0])
}

/// Hard links (`argmax_j α_ij`, lowest `j` on ties) and the soft matrix for
/// the first `output_len` rows of `alpha`; the `EOS` row is excluded by
/// passing the output length without it.
pub fn extract_alignment(
    alpha: &Tensor,
    output_len: usize,
) -> Result<(BTreeSet<Link>, SoftAlignmentMatrix), MetricsError> {
    let (rows, cols) = alpha
        .dims2()
        .map_err(|e| MetricsError::BadMatrix(e.to_string()))?;
    if output_len > rows {
        return Err(MetricsError::BadMatrix(format!(
            "{output_len} output tokens but only {rows} attention rows"
        )));
    }
    let data = alpha.data()[..output_len * cols].to_vec();
    let soft = SoftAlignmentMatrix::new(output_len, cols, data)?;
    let links = (0..output_len)
        .filter(|_| cols > 0)
        .map(|i| Link {
            tgt: i,
            src: argmax(alpha.row_slice(i)),
        })
        .collect();
    Ok((links, soft))
}

/// Teacher-forced attention for a reference pair, with the `EOS` row dropped.
pub fn forced_alignment(
    store: &ParameterStore,
    pair: &SentencePair,
) -> Result<(BTreeSet<Link>, SoftAlignmentMatrix), ModelError> {
    let out = crate::train::sequence_nll(store, pair)?;
    let output_len = pair.target.len().saturating_sub(1);
    extract_alignment(&out.record.alpha, output_len).map_err(|e| ModelError::Config(e.to_string()))
}
