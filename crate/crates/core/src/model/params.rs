use rand::Rng;
use serde::Serialize;

use super::{CoverageVariant, ModelConfig, ModelError};
use crate::corpus::PAD;
use crate::seed::{self, Stream};
use crate::tensor::{Tape, Tensor, Var};

/// Half-width of the uniform initialization range for weight matrices.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TensorKind {
    Embedding,
    Weight,
    Bias,
}

/// Translation parameters versus coverage-only parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Translation,
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: TensorKind,
    pub group: ParamGroup,
    /// Update/reset gate of the coverage GRU.
    pub gating: bool,
    pub fertility: bool,
}

impl TensorSpec {
    pub fn size(&self) -> usize {
        self.rows * self.cols
    }
}

/// Slots of one GRU: `w_*` act on the input, `u_*` on the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruSlots {
    pub w_z: usize,
    pub u_z: usize,
    pub b_z: usize,
    pub w_r: usize,
    pub u_r: usize,
    pub b_r: usize,
    pub w_c: usize,
    pub u_c: usize,
    pub b_c: usize,
}

/// Recurrent coverage cell. The input weight rows are ordered
/// `[α_ij ; h_j ; t_{i-1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageSlots {
    Tanh { w: usize, u: usize, b: usize },
    Gru(GruSlots),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub src_emb: usize,
    pub tgt_emb: usize,
    pub enc_fwd: GruSlots,
    pub enc_bwd: GruSlots,
    pub init_w: usize,
    pub dec: GruSlots,
    pub att_w: usize,
    pub att_u: usize,
    pub att_b: usize,
    pub att_v: usize,
    pub att_cov: Option<usize>,
    pub fert_u: Option<usize>,
    pub fert_b: Option<usize>,
    pub cov: Option<CoverageSlots>,
    pub read_t: usize,
    pub read_e: usize,
    pub read_s: usize,
    pub read_b: usize,
    pub out_w: usize,
    pub out_b: usize,
}

struct Builder {
    specs: Vec<TensorSpec>,
}

impl Builder {
    fn add(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        kind: TensorKind,
        group: ParamGroup,
    ) -> usize {
        self.specs.push(TensorSpec {
            name: name.to_string(),
            rows,
            cols,
            kind,
            group,
            gating: false,
            fertility: false,
        });
        self.specs.len() - 1
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize, group: ParamGroup) -> GruSlots {
        use TensorKind::{Bias, Weight};
        let mut slot = |gate: &str, kind, rows| {
            self.add(&format!("{prefix}.{gate}"), rows, hidden, kind, group)
        };
        let s = GruSlots {
            w_z: slot("w_z", Weight, input),
            u_z: slot("u_z", Weight, hidden),
            b_z: slot("b_z", Bias, 1),
            w_r: slot("w_r", Weight, input),
            u_r: slot("u_r", Weight, hidden),
            b_r: slot("b_r", Bias, 1),
            w_c: slot("w_c", Weight, input),
            u_c: slot("u_c", Weight, hidden),
            b_c: slot("b_c", Bias, 1),
        };
        if group == ParamGroup::Coverage {
            for i in [s.w_z, s.u_z, s.b_z, s.w_r, s.u_r, s.b_r] {
                self.specs[i].gating = true;
            }
        }
        s
    }
}

impl Layout {
    pub fn build(cfg: &ModelConfig) -> (Layout, Vec<TensorSpec>) {
        use ParamGroup::{Coverage, Translation};
        use TensorKind::{Bias, Embedding, Weight};
        let (m, n, d) = (cfg.emb_dim, cfg.hidden_dim, cfg.cov_dim);
        let mut b = Builder { specs: Vec::new() };
        let src_emb = b.add("src_emb", cfg.src_vocab, m, Embedding, Translation);
        let tgt_emb = b.add("tgt_emb", cfg.tgt_vocab, m, Embedding, Translation);
        let enc_fwd = b.gru("enc_fwd", m, n, Translation);
        let enc_bwd = b.gru("enc_bwd", m, n, Translation);
        let init_w = b.add("init.w_s", n, n, Weight, Translation);
        let dec = b.gru("dec", m + 2 * n, n, Translation);
        let att_w = b.add("att.w_a", n, n, Weight, Translation);
        let att_u = b.add("att.u_a", 2 * n, n, Weight, Translation);
        let att_b = b.add("att.b_a", 1, n, Bias, Translation);
        let att_v = b.add("att.v_a", n, 1, Weight, Translation);

        let variant = cfg.variant;
        let att_cov = variant
            .has_coverage()
            .then(|| b.add("cov.v_a", d, n, Weight, Coverage));
        let (fert_u, fert_b) = if variant == CoverageVariant::LinguisticFertility {
            let u = b.add("fert.u_f", 2 * n, 1, Weight, Coverage);
            let bias = b.add("fert.b_f", 1, 1, Bias, Coverage);
            b.specs[u].fertility = true;
            b.specs[bias].fertility = true;
            (Some(u), Some(bias))
        } else {
            (None, None)
        };
        let cov_in = 1 + 3 * n;
        let cov = match variant {
            CoverageVariant::NnTanh => Some(CoverageSlots::Tanh {
                w: b.add("cov.w", cov_in, d, Weight, Coverage),
                u: b.add("cov.u", d, d, Weight, Coverage),
                b: b.add("cov.b", 1, d, Bias, Coverage),
            }),
            CoverageVariant::NnGru => Some(CoverageSlots::Gru(b.gru("cov", cov_in, d, Coverage))),
            _ => None,
        };

        let read_t = b.add("read.w_t", n, m, Weight, Translation);
        let read_e = b.add("read.w_e", m, m, Weight, Translation);
        let read_s = b.add("read.w_s", 2 * n, m, Weight, Translation);
        let read_b = b.add("read.b", 1, m, Bias, Translation);
        let out_w = b.add("out.w", m, cfg.tgt_vocab, Weight, Translation);
        let out_b = b.add("out.b", 1, cfg.tgt_vocab, Bias, Translation);

        let layout = Layout {
            src_emb,
            tgt_emb,
            enc_fwd,
            enc_bwd,
            init_w,
            dec,
            att_w,
            att_u,
            att_b,
            att_v,
            att_cov,
            fert_u,
            fert_b,
            cov,
            read_t,
            read_e,
            read_s,
            read_b,
            out_w,
            out_b,
        };
        (layout, b.specs)
    }
}

/// Exact parameter accounting for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCount {
    pub per_tensor: Vec<(String, usize)>,
    pub total: usize,
    pub total_without_bias: usize,
    /// Parameters that exist only because of the coverage model.
    pub coverage: usize,
    pub coverage_without_bias: usize,
    /// Coverage-GRU update and reset gates.
    pub gating: usize,
    pub gating_without_bias: usize,
    /// Fertility predictor.
    pub fertility: usize,
    pub fertility_without_bias: usize,
}

pub fn count_parameters(cfg: &ModelConfig) -> ParamCount {
    let (_, specs) = Layout::build(cfg);
    let sum = |f: &dyn Fn(&TensorSpec) -> bool| {
        specs
            .iter()
            .filter(|s| f(s))
            .map(TensorSpec::size)
            .sum::<usize>()
    };
    let nb = |s: &TensorSpec| s.kind != TensorKind::Bias;
    ParamCount {
        per_tensor: specs.iter().map(|s| (s.name.clone(), s.size())).collect(),
        total: sum(&|_| true),
        total_without_bias: sum(&|s| nb(s)),
        coverage: sum(&|s| s.group == ParamGroup::Coverage),
        coverage_without_bias: sum(&|s| s.group == ParamGroup::Coverage && nb(s)),
        gating: sum(&|s| s.gating),
        gating_without_bias: sum(&|s| s.gating && nb(s)),
        fertility: sum(&|s| s.fertility),
        fertility_without_bias: sum(&|s| s.fertility && nb(s)),
    }
}

/// Named model tensors laid out according to [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    config: ModelConfig,
    layout: Layout,
    specs: Vec<TensorSpec>,
    tensors: Vec<Tensor>,
}

impl ParameterStore {
    /// Uniform(−0.08, 0.08) weights and embeddings, zero biases, zero `PAD`
    /// embeddings.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, specs) = Layout::build(config);
        let mut rng = seed::rng(seed, Stream::Init, 0);
        let tensors = specs
            .iter()
            .map(|s| {
                let mut t = Tensor::zeros(&[s.rows, s.cols]);
                if s.kind != TensorKind::Bias {
                    for v in t.data_mut() {
                        *v = rng.gen_range(-INIT_RANGE..INIT_RANGE);
                    }
                }
                if s.kind == TensorKind::Embedding {
                    t.data_mut()[PAD * s.cols..(PAD + 1) * s.cols].fill(0.0);
                }
                t
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layout,
            specs,
            tensors,
        })
    }

    /// All tensors zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, specs) = Layout::build(config);
        let tensors = specs
            .iter()
            .map(|s| Tensor::zeros(&[s.rows, s.cols]))
            .collect();
        Ok(Self {
            config: config.clone(),
            layout,
            specs,
            tensors,
        })
    }

    /// Rebuilds a store from tensors given in layout order.
    pub fn from_tensors(
        config: &ModelConfig,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, specs) = Layout::build(config);
        if named.len() != specs.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, t)) in specs.iter().zip(named) {
            if spec.name != name || t.shape() != [spec.rows, spec.cols] {
                return Err(ModelError::Checkpoint(format!(
                    "tensor '{name}' {:?} does not match expected '{}' [{}, {}]",
                    t.shape(),
                    spec.name,
                    spec.rows,
                    spec.cols
                )));
            }
            tensors.push(t);
        }
        Ok(Self {
            config: config.clone(),
            layout,
            specs,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slot(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slot(name).map(move |i| &mut self.tensors[i])
    }

    pub fn total(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Borrows every tensor onto `tape` as a trainable parameter leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> Vec<Var> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(t, i))
            .collect()
    }

    /// Slots of the embedding tables, whose `PAD` rows stay frozen at zero.
    pub fn embedding_slots(&self) -> [usize; 2] {
        [self.layout.src_emb, self.layout.tgt_emb]
    }
}
