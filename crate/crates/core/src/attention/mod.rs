//! Alignment model with optional coverage, fertility prediction and the
//! coverage update rules.
//!
//! All tape-level functions use the row layout: attention scores and
//! weights are `1 × J`, annotations `J × 2n`, coverage `J × d`.

mod trace;

pub use trace::{parse_traces, write_traces, AttentionTrace, TraceError};

use crate::model::{CoverageSlots, CoverageVariant, ModelError, Net};
use crate::tensor::{sigmoid, Tape, Tensor, Var};

/// Added to the score of masked positions before the softmax.
pub const MASK_PENALTY: f64 = -1e9;

/// Input weights of one coverage gate split by input block, with the
/// annotation projection precomputed for the whole sentence.
#[derive(Debug, Clone, Copy)]
struct GateInput {
    w_alpha: Var,
    w_t: Var,
    h_proj: Var,
    bias: Var,
}

/// Everything computed once per source sentence.
#[derive(Debug, Clone)]
pub struct SourceContext {
    pub annotations: Var,
    /// `H U_a`, `J × n`.
    pub ua_h: Var,
    /// `1 × J` additive mask, present only when some position is masked.
    pub mask: Option<Var>,
    /// `J × 1` fertilities for the fertility variant.
    pub fertility: Option<Var>,
    pub len: usize,
    gates: Vec<GateInput>,
}

/// Value snapshot of the coverage matrix after some decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageState {
    pub variant: CoverageVariant,
    /// `J × d`; empty for the baseline.
    pub values: Tensor,
    pub step: usize,
}

impl CoverageState {
    pub fn zeros(variant: CoverageVariant, source_len: usize, cov_dim: usize) -> Self {
        let d = if variant.has_coverage() { cov_dim } else { 0 };
        Self {
            variant,
            values: Tensor::zeros(&[source_len, d]),
            step: 0,
        }
    }

    /// Linguistic coverage as one value per source word.
    pub fn linguistic(&self) -> Option<Vec<f64>> {
        self.variant
            .is_linguistic()
            .then(|| self.values.data().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FertilityVector(pub Vec<f64>);

/// Attention weights for every emitted target position, `I × J`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub alpha: Tensor,
}

impl AttentionRecord {
    pub fn from_rows(rows: &[Vec<f64>], source_len: usize) -> Result<Self, ModelError> {
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Self {
            alpha: Tensor::matrix(rows.len(), source_len, data)?,
        })
    }

    pub fn target_len(&self) -> usize {
        self.alpha.rows()
    }

    /// `Σ_i α_ij` for every source position.
    pub fn column_sums(&self) -> Vec<f64> {
        let (i_len, j_len) = (self.alpha.rows(), self.alpha.cols());
        (0..j_len)
            .map(|j| (0..i_len).map(|i| self.alpha.at(i, j)).sum())
            .collect()
    }
}

fn coverage_gates(cov: CoverageSlots) -> Vec<(usize, usize)> {
    match cov {
        CoverageSlots::Tanh { w, b, .. } => vec![(w, b)],
        CoverageSlots::Gru(g) => vec![(g.w_z, g.b_z), (g.w_r, g.b_r), (g.w_c, g.b_c)],
    }
}

/// Precomputes `H U_a`, the mask, the fertilities and the annotation part of
/// the coverage cell input.
pub fn prepare_source(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    annotations: Var,
    mask: Option<&[bool]>,
) -> Result<SourceContext, ModelError> {
    let len = tape.value(annotations).rows();
    let n = net.config.hidden_dim;
    let ua_h = tape.matmul(annotations, net.v(net.layout.att_u))?;
    let mask = match mask {
        Some(m) if m.len() != len => {
            return Err(ModelError::Config(format!(
                "mask of length {} for {len} positions",
                m.len()
            )))
        }
        Some(m) if !m.iter().any(|&keep| keep) => return Err(ModelError::AllMasked),
        Some(m) if m.iter().any(|&keep| !keep) => {
            let row = m
                .iter()
                .map(|&keep| if keep { 0.0 } else { MASK_PENALTY })
                .collect();
            Some(tape.constant(Tensor::row(row)))
        }
        _ => None,
    };
    let fertility = match net.config.variant {
        CoverageVariant::LinguisticFertility => Some(predict_fertility(tape, net, annotations)?),
        _ => None,
    };
    let mut gates = Vec::new();
    if let Some(cov) = net.layout.cov {
        for (w, b) in coverage_gates(cov) {
            let w = net.v(w);
            let w_alpha = tape.slice_rows(w, 0, 1)?;
            let w_h = tape.slice_rows(w, 1, 1 + 2 * n)?;
            let w_t = tape.slice_rows(w, 1 + 2 * n, 1 + 3 * n)?;
            let h_proj = tape.matmul(annotations, w_h)?;
            gates.push(GateInput {
                w_alpha,
                w_t,
                h_proj,
                bias: net.v(b),
            });
        }
    }
    Ok(SourceContext {
        annotations,
        ua_h,
        mask,
        fertility,
        len,
        gates,
    })
}

/// Zero `J × d` coverage, or `None` for the baseline.
pub fn initial_coverage(tape: &mut Tape<'_>, net: &Net<'_>, source_len: usize) -> Option<Var> {
    net.config
        .variant
        .has_coverage()
        .then(|| tape.constant(Tensor::zeros(&[source_len, net.config.cov_dim])))
}

fn score_preactivation(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    ctx: &SourceContext,
    t_prev: Var,
) -> Result<Var, ModelError> {
    let wt = tape.matmul(t_prev, net.v(net.layout.att_w))?;
    let wt = tape.add(wt, net.v(net.layout.att_b))?;
    Ok(tape.add_row(ctx.ua_h, wt)?)
}

fn score_output(tape: &mut Tape<'_>, net: &Net<'_>, pre: Var) -> Result<Var, ModelError> {
    let act = tape.tanh(pre)?;
    let e = tape.matmul(act, net.v(net.layout.att_v))?;
    Ok(tape.transpose(e)?)
}

/// `e_ij = v_aᵀ tanh(W_a t_{i-1} + U_a h_j + b)`, as a `1 × J` row.
pub fn attention_scores_baseline(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    ctx: &SourceContext,
    t_prev: Var,
) -> Result<Var, ModelError> {
    let pre = score_preactivation(tape, net, ctx, t_prev)?;
    score_output(tape, net, pre)
}

/// Baseline scores with `V_a C_{i-1,j}` added inside the nonlinearity. The
/// coverage term is added last, so zero coverage reproduces the baseline
/// bit for bit.
pub fn attention_scores_with_coverage(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    ctx: &SourceContext,
    t_prev: Var,
    coverage: Var,
) -> Result<Var, ModelError> {
    let v_cov = net.layout.att_cov.ok_or(ModelError::VariantMismatch {
        variant: net.config.variant,
        state: CoverageVariant::LinguisticPlain,
    })?;
    let (rows, d) = tape.value(coverage).dims2()?;
    if rows != ctx.len || d != net.config.cov_dim {
        return Err(ModelError::Config(format!(
            "coverage is {rows}×{d}, expected {}×{}",
            ctx.len, net.config.cov_dim
        )));
    }
    let pre = score_preactivation(tape, net, ctx, t_prev)?;
    let vc = tape.matmul(coverage, net.v(v_cov))?;
    let pre = tape.add(pre, vc)?;
    score_output(tape, net, pre)
}

/// Masked softmax over source positions.
pub fn attention_weights(
    tape: &mut Tape<'_>,
    scores: Var,
    mask: Option<Var>,
) -> Result<Var, ModelError> {
    let scores = match mask {
        Some(m) => {
            if tape.value(m).data().iter().all(|&v| v != 0.0) {
                return Err(ModelError::AllMasked);
            }
            tape.add(scores, m)?
        }
        None => scores,
    };
    Ok(tape.softmax_rows(scores)?)
}

/// `s_i = Σ_j α_ij h_j`.
pub fn context_vector(
    tape: &mut Tape<'_>,
    alpha: Var,
    annotations: Var,
) -> Result<Var, ModelError> {
    Ok(tape.matmul(alpha, annotations)?)
}

/// Keeps predicted fertility strictly inside `(0, N)` where `σ` saturates.
const FERTILITY_GATE_MARGIN: f64 = 1e-12;

fn fertility_gate(x: f64) -> f64 {
    sigmoid(x).clamp(FERTILITY_GATE_MARGIN, 1.0 - FERTILITY_GATE_MARGIN)
}

fn fertility_gate_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    if s <= FERTILITY_GATE_MARGIN || s >= 1.0 - FERTILITY_GATE_MARGIN {
        0.0
    } else {
        s * (1.0 - s)
    }
}

/// `Φ_j = N σ(U_f h_j + b_f)`, as a `J × 1` column.
pub fn predict_fertility(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    annotations: Var,
) -> Result<Var, ModelError> {
    let (u, b) = match (net.layout.fert_u, net.layout.fert_b) {
        (Some(u), Some(b)) => (u, b),
        _ => {
            return Err(ModelError::VariantMismatch {
                variant: net.config.variant,
                state: CoverageVariant::LinguisticFertility,
            })
        }
    };
    let pre = tape.matmul(annotations, net.v(u))?;
    let pre = tape.add_row(pre, net.v(b))?;
    let gate = tape.custom(pre, fertility_gate, fertility_gate_deriv)?;
    Ok(tape.scale(gate, net.config.max_fertility)?)
}

/// `C_ij = C_{i-1,j} + α_ij / Φ_j`; `Φ ≡ 1` when `fertility` is `None`.
pub fn update_linguistic_coverage(
    tape: &mut Tape<'_>,
    coverage: Var,
    alpha: Var,
    fertility: Option<Var>,
) -> Result<Var, ModelError> {
    let col = tape.transpose(alpha)?;
    let inc = match fertility {
        Some(phi) => {
            if let Some((position, &value)) = tape
                .value(phi)
                .data()
                .iter()
                .enumerate()
                .find(|(_, &v)| v.is_nan() || v <= 0.0)
            {
                return Err(ModelError::NonPositiveFertility { position, value });
            }
            tape.div(col, phi)?
        }
        None => col,
    };
    Ok(tape.add(coverage, inc)?)
}

/// Coverage cell applied to one source word: input `[α_ij ; h_j ; t_{i-1}]`,
/// recurrent state `C_{i-1,j}` (`1 × d`).
pub fn update_nn_coverage(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    coverage_row: Var,
    alpha_ij: Var,
    h_j: Var,
    t_prev: Var,
) -> Result<Var, ModelError> {
    let cov = nn_slots(net)?;
    let x = tape.concat_cols(&[alpha_ij, h_j, t_prev])?;
    match cov {
        CoverageSlots::Tanh { w, u, b } => {
            let xw = tape.matmul(x, net.v(w))?;
            let cu = tape.matmul(coverage_row, net.v(u))?;
            let pre = tape.add(xw, cu)?;
            let pre = tape.add(pre, net.v(b))?;
            Ok(tape.tanh(pre)?)
        }
        CoverageSlots::Gru(g) => Ok(crate::model::gru_cell_step(tape, net, &g, x, coverage_row)?),
    }
}

fn nn_slots(net: &Net<'_>) -> Result<CoverageSlots, ModelError> {
    match (net.config.variant.is_neural(), net.layout.cov) {
        (true, Some(cov)) => Ok(cov),
        _ => Err(ModelError::VariantMismatch {
            variant: net.config.variant,
            state: CoverageVariant::NnGru,
        }),
    }
}

/// Gate input `α_ij w_α + H W_h + t_{i-1} W_t + b` for all `j` at once.
fn gate_preactivation(
    tape: &mut Tape<'_>,
    gate: &GateInput,
    alpha_col: Var,
    t_prev: Var,
) -> Result<Var, ModelError> {
    let a = tape.matmul(alpha_col, gate.w_alpha)?;
    let x = tape.add(gate.h_proj, a)?;
    let t = tape.matmul(t_prev, gate.w_t)?;
    let tb = tape.add(t, gate.bias)?;
    Ok(tape.add_row(x, tb)?)
}

/// Applies the configured coverage update to every source word.
pub fn coverage_step(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    ctx: &SourceContext,
    coverage: Var,
    alpha: Var,
    t_prev: Var,
) -> Result<Var, ModelError> {
    match net.config.variant {
        CoverageVariant::None => Ok(coverage),
        CoverageVariant::LinguisticPlain => update_linguistic_coverage(tape, coverage, alpha, None),
        CoverageVariant::LinguisticFertility => {
            let phi = ctx.fertility.ok_or(ModelError::VariantMismatch {
                variant: net.config.variant,
                state: CoverageVariant::LinguisticPlain,
            })?;
            update_linguistic_coverage(tape, coverage, alpha, Some(phi))
        }
        CoverageVariant::NnTanh | CoverageVariant::NnGru => {
            let col = tape.transpose(alpha)?;
            let mut pre = Vec::with_capacity(ctx.gates.len());
            for gate in &ctx.gates {
                pre.push(gate_preactivation(tape, gate, col, t_prev)?);
            }
            match nn_slots(net)? {
                CoverageSlots::Tanh { u, .. } => {
                    let cu = tape.matmul(coverage, net.v(u))?;
                    let sum = tape.add(pre[0], cu)?;
                    Ok(tape.tanh(sum)?)
                }
                CoverageSlots::Gru(g) => Ok(crate::model::gru_update(
                    tape, net, &g, coverage, pre[0], pre[1], pre[2],
                )?),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParameterStore};
    use crate::tensor::grad_check;

    fn cfg(variant: CoverageVariant) -> ModelConfig {
        ModelConfig {
            emb_dim: 4,
            hidden_dim: 3,
            cov_dim: if variant.is_neural() { 2 } else { 1 },
            max_fertility: 2.0,
            variant,
            src_vocab: 9,
            tgt_vocab: 7,
            max_len_factor: 2.0,
        }
    }

    fn annotations(j: usize) -> Tensor {
        Tensor::matrix(
            j,
            6,
            (0..j * 6)
                .map(|k| ((k as f64) * 0.91).sin() * 0.8)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn softmax_weights() {
        let mut tape = Tape::new();
        let e = tape.constant(Tensor::row(vec![0.0, 0.0]));
        let a = attention_weights(&mut tape, e, None).unwrap();
        assert_eq!(tape.value(a).data(), &[0.5, 0.5]);
        let e = tape.constant(Tensor::row(vec![2f64.ln(), 0.0]));
        let a = attention_weights(&mut tape, e, None).unwrap();
        let got = tape.value(a).data().to_vec();
        assert!((got[0] - 2.0 / 3.0).abs() < 1e-15 && (got[1] - 1.0 / 3.0).abs() < 1e-15);
        let e = tape.constant(Tensor::row(vec![0.3, 5.0]));
        let m = tape.constant(Tensor::row(vec![0.0, MASK_PENALTY]));
        let a = attention_weights(&mut tape, e, Some(m)).unwrap();
        assert_eq!(tape.value(a).data(), &[1.0, 0.0]);
        let all = tape.constant(Tensor::row(vec![MASK_PENALTY; 2]));
        assert!(matches!(
            attention_weights(&mut tape, e, Some(all)),
            Err(ModelError::AllMasked)
        ));
    }

    #[test]
    fn context_vector_cases() {
        let mut tape = Tape::new();
        let h = tape.constant(annotations(3));
        let onehot = tape.constant(Tensor::row(vec![0.0, 1.0, 0.0]));
        let s = context_vector(&mut tape, onehot, h).unwrap();
        assert_eq!(tape.value(s).data(), annotations(3).row_slice(1));

        let same =
            tape.constant(Tensor::matrix(3, 2, vec![0.4, -0.2, 0.4, -0.2, 0.4, -0.2]).unwrap());
        let a = tape.constant(Tensor::row(vec![0.2, 0.3, 0.5]));
        let s = context_vector(&mut tape, a, same).unwrap();
        for (v, want) in tape.value(s).data().iter().zip([0.4, -0.2]) {
            assert!((v - want).abs() < 1e-15);
        }

        let alpha = [0.1, 0.6, 0.3];
        let a = tape.constant(Tensor::row(alpha.to_vec()));
        let s = context_vector(&mut tape, a, h).unwrap();
        let hv = annotations(3);
        for c in 0..6 {
            let mut naive = 0.0;
            for (j, w) in alpha.iter().enumerate() {
                naive += w * hv.at(j, c);
            }
            assert!((tape.value(s).data()[c] - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn fertility_zero_weights_and_bounds() {
        let c = cfg(CoverageVariant::LinguisticFertility);
        let zero = ParameterStore::zeros(&c).unwrap();
        let mut tape = Tape::new();
        let net = Net::bind(&zero, &mut tape);
        let h = tape.constant(annotations(4));
        let phi = predict_fertility(&mut tape, &net, h).unwrap();
        assert!(tape.value(phi).data().iter().all(|&v| v == 1.0));

        let mut big = ParameterStore::init(&c, 3).unwrap();
        big.get_mut("fert.u_f")
            .unwrap()
            .data_mut()
            .iter_mut()
            .for_each(|v| *v *= 50.0);
        let mut tape = Tape::new();
        let net = Net::bind(&big, &mut tape);
        let h = tape.constant(annotations(6));
        let phi = predict_fertility(&mut tape, &net, h).unwrap();
        assert!(tape.value(phi).data().iter().all(|&v| v > 0.0 && v < 2.0));
    }

    #[test]
    fn linguistic_update_arithmetic() {
        let mut tape = Tape::new();
        let c0 = tape.constant(Tensor::zeros(&[2, 1]));
        let a = tape.constant(Tensor::row(vec![0.5, 0.5]));
        let c1 = update_linguistic_coverage(&mut tape, c0, a, None).unwrap();
        assert_eq!(tape.value(c1).data(), &[0.5, 0.5]);

        let phi = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let c = tape.constant(Tensor::zeros(&[1, 1]));
        let one = tape.constant(Tensor::scalar(1.0));
        let c = update_linguistic_coverage(&mut tape, c, one, Some(phi)).unwrap();
        let c = update_linguistic_coverage(&mut tape, c, one, Some(phi)).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0]);

        let bad = tape.constant(Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap());
        assert!(matches!(
            update_linguistic_coverage(&mut tape, c1, a, Some(bad)),
            Err(ModelError::NonPositiveFertility { position: 1, .. })
        ));
    }

    fn scores_pair(variant: CoverageVariant, zero_va: bool, coverage: Tensor) -> (Tensor, Tensor) {
        let c = cfg(variant);
        let mut store = ParameterStore::init(&c, 12).unwrap();
        if zero_va {
            store.get_mut("cov.v_a").unwrap().data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let net = Net::bind(&store, &mut tape);
        let h = tape.constant(annotations(4));
        let ctx = prepare_source(&mut tape, &net, h, None).unwrap();
        let t = tape.constant(Tensor::row(vec![0.2, -0.5, 0.7]));
        let cov = tape.constant(coverage);
        let base = attention_scores_baseline(&mut tape, &net, &ctx, t).unwrap();
        let with = attention_scores_with_coverage(&mut tape, &net, &ctx, t, cov).unwrap();
        (tape.value(base).clone(), tape.value(with).clone())
    }

    #[test]
    fn zero_coverage_reduces_to_baseline_bitwise() {
        for v in [CoverageVariant::LinguisticPlain, CoverageVariant::NnGru] {
            let d = cfg(v).cov_dim;
            let (base, with) = scores_pair(v, false, Tensor::zeros(&[4, d]));
            assert_eq!(base, with);
            let (base, with) = scores_pair(v, true, Tensor::full(&[4, d], 0.7));
            assert_eq!(base, with);
            let (base, with) = scores_pair(v, false, Tensor::full(&[4, d], 0.7));
            assert_ne!(base, with);
        }
    }

    #[test]
    fn coverage_dim_mismatch_errors() {
        let c = cfg(CoverageVariant::NnGru);
        let store = ParameterStore::init(&c, 1).unwrap();
        let mut tape = Tape::new();
        let net = Net::bind(&store, &mut tape);
        let h = tape.constant(annotations(4));
        let ctx = prepare_source(&mut tape, &net, h, None).unwrap();
        let t = tape.constant(Tensor::row(vec![0.0; 3]));
        let bad = tape.constant(Tensor::zeros(&[4, 3]));
        assert!(attention_scores_with_coverage(&mut tape, &net, &ctx, t, bad).is_err());
    }

    #[test]
    fn nn_cell_zero_and_copy_gate() {
        for v in [CoverageVariant::NnTanh, CoverageVariant::NnGru] {
            let store = ParameterStore::zeros(&cfg(v)).unwrap();
            let mut tape = Tape::new();
            let net = Net::bind(&store, &mut tape);
            let c = tape.constant(Tensor::zeros(&[1, 2]));
            let a = tape.constant(Tensor::scalar(0.4));
            let h = tape.constant(Tensor::row(vec![0.3; 6]));
            let t = tape.constant(Tensor::row(vec![-0.2; 3]));
            let out = update_nn_coverage(&mut tape, &net, c, a, h, t).unwrap();
            assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
        }
        let mut store = ParameterStore::init(&cfg(CoverageVariant::NnGru), 2).unwrap();
        store.get_mut("cov.b_z").unwrap().data_mut().fill(-1e3);
        let mut tape = Tape::new();
        let net = Net::bind(&store, &mut tape);
        let prev = Tensor::row(vec![0.35, -0.6]);
        let c = tape.constant(prev.clone());
        let a = tape.constant(Tensor::scalar(0.4));
        let h = tape.constant(Tensor::row(vec![0.3; 6]));
        let t = tape.constant(Tensor::row(vec![-0.2; 3]));
        let out = update_nn_coverage(&mut tape, &net, c, a, h, t).unwrap();
        assert!(tape.value(out).max_abs_diff(&prev) < 1e-9);
    }

    #[test]
    fn batched_nn_step_matches_per_word_calls() {
        for v in [CoverageVariant::NnTanh, CoverageVariant::NnGru] {
            let store = ParameterStore::init(&cfg(v), 21).unwrap();
            let mut tape = Tape::new();
            let net = Net::bind(&store, &mut tape);
            let hv = annotations(3);
            let h = tape.constant(hv.clone());
            let ctx = prepare_source(&mut tape, &net, h, None).unwrap();
            let cv = Tensor::matrix(3, 2, vec![0.1, -0.2, 0.3, 0.0, -0.4, 0.5]).unwrap();
            let c = tape.constant(cv.clone());
            let alpha = [0.2, 0.5, 0.3];
            let a = tape.constant(Tensor::row(alpha.to_vec()));
            let t = tape.constant(Tensor::row(vec![0.1, 0.6, -0.3]));
            let batched = coverage_step(&mut tape, &net, &ctx, c, a, t).unwrap();
            let batched = tape.value(batched).clone();
            for (j, &a_j) in alpha.iter().enumerate() {
                let cj = tape.constant(Tensor::row(cv.row_slice(j).to_vec()));
                let aj = tape.constant(Tensor::scalar(a_j));
                let hj = tape.constant(Tensor::row(hv.row_slice(j).to_vec()));
                let one = update_nn_coverage(&mut tape, &net, cj, aj, hj, t).unwrap();
                for (x, y) in tape.value(one).data().iter().zip(batched.row_slice(j)) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn none_variant_leaves_state_unchanged() {
        let store = ParameterStore::init(&cfg(CoverageVariant::None), 1).unwrap();
        let mut tape = Tape::new();
        let net = Net::bind(&store, &mut tape);
        let h = tape.constant(annotations(2));
        let ctx = prepare_source(&mut tape, &net, h, None).unwrap();
        assert!(initial_coverage(&mut tape, &net, 2).is_none());
        let c = tape.constant(Tensor::zeros(&[2, 1]));
        let a = tape.constant(Tensor::row(vec![0.5, 0.5]));
        let t = tape.constant(Tensor::row(vec![0.0; 3]));
        let out = coverage_step(&mut tape, &net, &ctx, c, a, t).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn nn_cell_gradients_through_all_inputs() {
        for v in [CoverageVariant::NnTanh, CoverageVariant::NnGru] {
            let c = cfg(v);
            let store = ParameterStore::init(&c, 5).unwrap();
            let layout = store.layout().clone();
            let mut leaves = store.tensors().to_vec();
            let k = leaves.len();
            leaves.push(Tensor::row(vec![0.3, -0.1]));
            leaves.push(Tensor::scalar(0.45));
            leaves.push(Tensor::row(vec![0.2, -0.4, 0.1, 0.5, -0.3, 0.05]));
            leaves.push(Tensor::row(vec![0.6, -0.2, 0.3]));
            let report = grad_check(
                &leaves,
                |tape, vars| -> Result<Var, ModelError> {
                    let net = Net::from_vars(&c, &layout, vars[..k].to_vec());
                    let out = update_nn_coverage(
                        tape,
                        &net,
                        vars[k],
                        vars[k + 1],
                        vars[k + 2],
                        vars[k + 3],
                    )?;
                    let sq = tape.mul(out, out)?;
                    Ok(tape.sum(sq)?)
                },
                1e-3,
                1e-4,
            );
            assert!(report.passed, "{v}: {report:?}");
        }
    }

    #[test]
    fn gradients_through_coverage_scores_and_fertility() {
        let c = cfg(CoverageVariant::LinguisticFertility);
        let store = ParameterStore::init(&c, 9).unwrap();
        let layout = store.layout().clone();
        let mut leaves = store.tensors().to_vec();
        let k = leaves.len();
        leaves.push(annotations(3));
        leaves.push(Tensor::matrix(3, 1, vec![0.2, 0.9, 0.4]).unwrap());
        leaves.push(Tensor::row(vec![0.1, 0.2, -0.3]));
        let report = grad_check(
            &leaves,
            |tape, vars| -> Result<Var, ModelError> {
                let net = Net::from_vars(&c, &layout, vars[..k].to_vec());
                let ctx = prepare_source(tape, &net, vars[k], None)?;
                let e = attention_scores_with_coverage(tape, &net, &ctx, vars[k + 2], vars[k + 1])?;
                let a = attention_weights(tape, e, None)?;
                let cov = coverage_step(tape, &net, &ctx, vars[k + 1], a, vars[k + 2])?;
                let sq = tape.mul(cov, cov)?;
                Ok(tape.sum(sq)?)
            },
            1e-3,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn record_column_sums() {
        let r = AttentionRecord::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]], 2).unwrap();
        assert_eq!(r.column_sums(), vec![0.5, 1.5]);
        assert_eq!(r.target_len(), 2);
    }
}
