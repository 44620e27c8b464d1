use super::{GruSlots, Layout, ModelConfig, ModelError, ParameterStore};
use crate::attention::{self, SourceContext};
use crate::corpus::BOS;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Model parameters bound to a tape, addressed by [`Layout`] slot.
#[derive(Debug, Clone)]
pub struct Net<'c> {
    pub config: &'c ModelConfig,
    pub layout: &'c Layout,
    vars: Vec<Var>,
}

/// Recurrent decoder state `t` plus the coverage matrix, if any.
#[derive(Debug, Clone, Copy)]
pub struct DecodeState {
    pub t: Var,
    pub coverage: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    /// Unnormalized alignment scores, `1 × J`.
    pub scores: Var,
    /// Alignment weights, `1 × J`.
    pub alpha: Var,
    /// Expected annotation, `1 × 2n`.
    pub context: Var,
    pub state: DecodeState,
    /// Readout layer activation, `1 × m`.
    pub readout: Var,
}

/// One GRU transition with precomputed input terms (biases included).
pub(crate) fn gru_update(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    s: &GruSlots,
    h: Var,
    xz: Var,
    xr: Var,
    xc: Var,
) -> Result<Var, TensorError> {
    let hz = tape.matmul(h, net.v(s.u_z))?;
    let z = tape.add(xz, hz)?;
    let z = tape.sigmoid(z)?;
    let hr = tape.matmul(h, net.v(s.u_r))?;
    let r = tape.add(xr, hr)?;
    let r = tape.sigmoid(r)?;
    let rh = tape.mul(r, h)?;
    let hc = tape.matmul(rh, net.v(s.u_c))?;
    let c = tape.add(xc, hc)?;
    let c = tape.tanh(c)?;
    // (1 − z) ⊙ h + z ⊙ c
    let diff = tape.sub(c, h)?;
    let step = tape.mul(z, diff)?;
    tape.add(h, step)
}

fn affine(tape: &mut Tape<'_>, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Single GRU step: `z = σ(W_z x + U_z h)`, `r = σ(W_r x + U_r h)`,
/// `h̃ = tanh(W x + U (r ⊙ h))`, `h' = (1 − z) ⊙ h + z ⊙ h̃`, with biases.
pub fn gru_cell_step(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    s: &GruSlots,
    x: Var,
    h: Var,
) -> Result<Var, TensorError> {
    let xz = affine(tape, x, net.v(s.w_z), net.v(s.b_z))?;
    let xr = affine(tape, x, net.v(s.w_r), net.v(s.b_r))?;
    let xc = affine(tape, x, net.v(s.w_c), net.v(s.b_c))?;
    gru_update(tape, net, s, h, xz, xr, xc)
}

impl<'c> Net<'c> {
    pub fn bind(store: &'c ParameterStore, tape: &mut Tape<'c>) -> Self {
        Self {
            config: store.config(),
            layout: store.layout(),
            vars: store.bind(tape),
        }
    }

    pub fn from_vars(config: &'c ModelConfig, layout: &'c Layout, vars: Vec<Var>) -> Self {
        Self {
            config,
            layout,
            vars,
        }
    }

    pub fn v(&self, slot: usize) -> Var {
        self.vars[slot]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn check_ids(ids: &[usize], size: usize) -> Result<(), ModelError> {
        match ids.iter().find(|&&id| id >= size) {
            Some(&id) => Err(ModelError::TokenOutOfRange { id, size }),
            None => Ok(()),
        }
    }

    fn run_direction(
        &self,
        tape: &mut Tape<'_>,
        s: &GruSlots,
        x: Var,
        order: impl Iterator<Item = usize>,
        mask: Option<&[bool]>,
        len: usize,
    ) -> Result<Vec<Var>, ModelError> {
        let n = self.config.hidden_dim;
        let xz = affine(tape, x, self.v(s.w_z), self.v(s.b_z))?;
        let xr = affine(tape, x, self.v(s.w_r), self.v(s.b_r))?;
        let xc = affine(tape, x, self.v(s.w_c), self.v(s.b_c))?;
        let mut h = tape.constant(Tensor::zeros(&[1, n]));
        let mut states = vec![h; len];
        for j in order {
            if mask.is_none_or(|m| m[j]) {
                let (z, r, c) = (
                    tape.slice_rows(xz, j, j + 1)?,
                    tape.slice_rows(xr, j, j + 1)?,
                    tape.slice_rows(xc, j, j + 1)?,
                );
                h = gru_update(tape, self, s, h, z, r, c)?;
            }
            states[j] = h;
        }
        Ok(states)
    }

    /// Annotations `J × 2n`: row `j` is `[forward_j ; backward_j]`.
    ///
    /// Masked (padding) positions are skipped by the backward pass so they
    /// never influence real positions.
    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        source: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<Var, ModelError> {
        if source.is_empty() {
            return Err(ModelError::EmptySource);
        }
        Self::check_ids(source, self.config.src_vocab)?;
        let len = source.len();
        let x = tape.embedding(self.v(self.layout.src_emb), source)?;
        let fwd = self.run_direction(tape, &self.layout.enc_fwd, x, 0..len, None, len)?;
        let bwd = self.run_direction(tape, &self.layout.enc_bwd, x, (0..len).rev(), mask, len)?;
        let fwd = tape.concat_rows(&fwd)?;
        let bwd = tape.concat_rows(&bwd)?;
        Ok(tape.concat_cols(&[fwd, bwd])?)
    }

    /// `t_0 = tanh(W_s · backward annotation of the first word)`.
    pub fn init_state(&self, tape: &mut Tape<'_>, annotations: Var) -> Result<Var, ModelError> {
        let n = self.config.hidden_dim;
        let first = tape.slice_rows(annotations, 0, 1)?;
        let back = tape.slice_cols(first, n, 2 * n)?;
        let pre = tape.matmul(back, self.v(self.layout.init_w))?;
        Ok(tape.tanh(pre)?)
    }

    pub fn embed_target(&self, tape: &mut Tape<'_>, ids: &[usize]) -> Result<Var, ModelError> {
        Self::check_ids(ids, self.config.tgt_vocab)?;
        Ok(tape.embedding(self.v(self.layout.tgt_emb), ids)?)
    }

    /// GRU transition on input `[emb(y_{i-1}) ; s_i]`.
    pub fn decoder_step(
        &self,
        tape: &mut Tape<'_>,
        t_prev: Var,
        y_prev_emb: Var,
        context: Var,
    ) -> Result<Var, ModelError> {
        let x = tape.concat_cols(&[y_prev_emb, context])?;
        Ok(gru_cell_step(tape, self, &self.layout.dec, x, t_prev)?)
    }

    /// `tanh(W_t t_i + W_e emb(y_{i-1}) + W_s s_i + b)`.
    pub fn readout(
        &self,
        tape: &mut Tape<'_>,
        t: Var,
        y_prev_emb: Var,
        context: Var,
    ) -> Result<Var, ModelError> {
        let l = self.layout;
        let a = tape.matmul(t, self.v(l.read_t))?;
        let b = tape.matmul(y_prev_emb, self.v(l.read_e))?;
        let c = tape.matmul(context, self.v(l.read_s))?;
        let sum = tape.add(a, b)?;
        let sum = tape.add(sum, c)?;
        let sum = tape.add_row(sum, self.v(l.read_b))?;
        Ok(tape.tanh(sum)?)
    }

    /// Output-layer logits for one or more stacked readout rows.
    pub fn logits(&self, tape: &mut Tape<'_>, readout: Var) -> Result<Var, ModelError> {
        Ok(affine(
            tape,
            readout,
            self.v(self.layout.out_w),
            self.v(self.layout.out_b),
        )?)
    }

    /// `P(y_i | y_<i, x)` for one step.
    pub fn output_distribution(
        &self,
        tape: &mut Tape<'_>,
        y_prev: usize,
        t: Var,
        context: Var,
    ) -> Result<Vec<f64>, ModelError> {
        let e = self.embed_target(tape, &[y_prev])?;
        let r = self.readout(tape, t, e, context)?;
        let logits = self.logits(tape, r)?;
        Ok(crate::tensor::softmax_row(tape.value(logits).data()))
    }

    /// Encodes the source and prepares everything computed once per sentence.
    pub fn start(
        &self,
        tape: &mut Tape<'_>,
        source: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<(SourceContext, DecodeState), ModelError> {
        let h = self.encode(tape, source, mask)?;
        let ctx = attention::prepare_source(tape, self, h, mask)?;
        let t = self.init_state(tape, h)?;
        let coverage = attention::initial_coverage(tape, self, ctx.len);
        Ok((ctx, DecodeState { t, coverage }))
    }

    /// Attention (with coverage), decoder transition, readout and coverage
    /// update for one target position.
    pub fn step(
        &self,
        tape: &mut Tape<'_>,
        ctx: &SourceContext,
        state: &DecodeState,
        y_prev: usize,
    ) -> Result<StepOutput, ModelError> {
        let scores = match state.coverage {
            Some(c) => attention::attention_scores_with_coverage(tape, self, ctx, state.t, c)?,
            None => attention::attention_scores_baseline(tape, self, ctx, state.t)?,
        };
        let alpha = attention::attention_weights(tape, scores, ctx.mask)?;
        let context = attention::context_vector(tape, alpha, ctx.annotations)?;
        let e = self.embed_target(tape, &[y_prev])?;
        let t = self.decoder_step(tape, state.t, e, context)?;
        let readout = self.readout(tape, t, e, context)?;
        let coverage = match state.coverage {
            Some(c) => Some(attention::coverage_step(
                tape, self, ctx, c, alpha, state.t,
            )?),
            None => None,
        };
        Ok(StepOutput {
            scores,
            alpha,
            context,
            state: DecodeState { t, coverage },
            readout,
        })
    }

    /// Teacher-forced previous-token sequence `BOS, y_1, …, y_{I-1}`.
    pub fn shifted(target: &[usize]) -> Vec<usize> {
        std::iter::once(BOS)
            .chain(target.iter().copied())
            .take(target.len())
            .collect()
    }
}
