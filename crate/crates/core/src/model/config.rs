use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::EOS;

/// How (and whether) attention history is fed back into the alignment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageVariant {
    None,
    /// Sum of past attention weights (fertility fixed at one).
    LinguisticPlain,
    /// Past attention weights normalized by predicted fertility.
    LinguisticFertility,
    /// Recurrent coverage with a plain `tanh` update.
    NnTanh,
    /// Recurrent coverage with a GRU update.
    NnGru,
}

impl CoverageVariant {
    pub const ALL: [CoverageVariant; 5] = [
        CoverageVariant::None,
        CoverageVariant::LinguisticPlain,
        CoverageVariant::LinguisticFertility,
        CoverageVariant::NnTanh,
        CoverageVariant::NnGru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoverageVariant::None => "none",
            CoverageVariant::LinguisticPlain => "linguistic-plain",
            CoverageVariant::LinguisticFertility => "linguistic-fertility",
            CoverageVariant::NnTanh => "nn-tanh",
            CoverageVariant::NnGru => "nn-gru",
        }
    }

    pub fn is_linguistic(self) -> bool {
        matches!(
            self,
            CoverageVariant::LinguisticPlain | CoverageVariant::LinguisticFertility
        )
    }

    pub fn is_neural(self) -> bool {
        matches!(self, CoverageVariant::NnTanh | CoverageVariant::NnGru)
    }

    pub fn has_coverage(self) -> bool {
        self != CoverageVariant::None
    }

    pub fn default_cov_dim(self) -> usize {
        match self {
            CoverageVariant::NnGru => 10,
            _ => 1,
        }
    }
}

impl fmt::Display for CoverageVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoverageVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown coverage variant '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full-size dimensions: 620-dim embeddings, 1000 hidden units, 30K vocabularies.
    Paper,
    /// Small dimensions for training on synthetic tasks.
    Desk,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(format!("unknown preset '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Word embedding size `m`; also the readout width.
    pub emb_dim: usize,
    /// Recurrent hidden size `n`; annotations have `2n` entries.
    pub hidden_dim: usize,
    /// Coverage vector size `d`.
    pub cov_dim: usize,
    /// Upper bound `N` on predicted fertility.
    pub max_fertility: f64,
    pub variant: CoverageVariant,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Decoding stops after `factor × J + 5` tokens.
    pub max_len_factor: f64,
}

impl ModelConfig {
    pub fn preset(preset: Preset, variant: CoverageVariant) -> Self {
        let (emb_dim, hidden_dim, vocab) = match preset {
            Preset::Paper => (620, 1000, 30_000),
            Preset::Desk => (32, 64, 64),
        };
        Self {
            emb_dim,
            hidden_dim,
            cov_dim: variant.default_cov_dim(),
            max_fertility: 2.0,
            variant,
            src_vocab: vocab,
            tgt_vocab: vocab,
            max_len_factor: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.emb_dim == 0 || self.hidden_dim == 0 || self.cov_dim == 0 {
            return bad("emb_dim, hidden_dim and cov_dim must be at least 1".into());
        }
        if !(self.max_fertility > 0.0 && self.max_fertility.is_finite()) {
            return bad(format!(
                "max_fertility must be positive, got {}",
                self.max_fertility
            ));
        }
        if self.variant.is_linguistic() && self.cov_dim != 1 {
            return bad(format!(
                "{} coverage is scalar; cov_dim must be 1",
                self.variant
            ));
        }
        if self.src_vocab == 0 || self.tgt_vocab <= EOS {
            return bad("vocabularies too small".into());
        }
        if !(self.max_len_factor >= 0.0 && self.max_len_factor.is_finite()) {
            return bad("max_len_factor must be non-negative".into());
        }
        Ok(())
    }

    pub fn max_decode_len(&self, source_len: usize) -> usize {
        (self.max_len_factor * source_len as f64).floor() as usize + 5
    }

    /// Same dimensions with a different coverage variant.
    pub fn with_variant(&self, variant: CoverageVariant) -> Self {
        Self {
            variant,
            cov_dim: if variant.is_linguistic() {
                1
            } else {
                self.cov_dim
            },
            ..self.clone()
        }
    }
}
