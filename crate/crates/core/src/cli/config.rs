use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::model::{CoverageVariant, ModelConfig, Preset};
use crate::train::TrainConfig;

pub const DEFAULT_BEAM: usize = 10;

/// Partial model settings accepted in a config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub emb_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub cov_dim: Option<usize>,
    pub max_fertility: Option<f64>,
    pub variant: Option<CoverageVariant>,
    pub src_vocab: Option<usize>,
    pub tgt_vocab: Option<usize>,
    pub max_len_factor: Option<f64>,
}

/// JSON file given with `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<Preset>,
    pub model: ModelOverrides,
    pub train: Option<TrainConfig>,
    pub beam: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub variant: Option<CoverageVariant>,
    pub cov_dim: Option<usize>,
    pub fertility_n: Option<f64>,
    pub lambda: Option<f64>,
    pub beam: Option<usize>,
    pub seed: Option<u64>,
    pub dump_attention: Option<PathBuf>,
}

/// Fully resolved settings: flags, then the config file, then the preset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub beam: usize,
    pub dump_attention: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let file = match &flags.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Self::resolve_with(flags, file)
    }

    pub fn resolve_with(flags: &Overrides, file: ConfigFile) -> Result<Self> {
        let preset = flags.preset.or(file.preset).unwrap_or(Preset::Desk);
        let m = &file.model;
        let variant = flags.variant.or(m.variant).unwrap_or(CoverageVariant::None);
        let mut model = ModelConfig::preset(preset, variant);
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut model.emb_dim, m.emb_dim);
        set(&mut model.hidden_dim, m.hidden_dim);
        set(&mut model.src_vocab, m.src_vocab);
        set(&mut model.tgt_vocab, m.tgt_vocab);
        set(&mut model.cov_dim, flags.cov_dim.or(m.cov_dim));
        if let Some(n) = flags.fertility_n.or(m.max_fertility) {
            model.max_fertility = n;
        }
        if let Some(f) = m.max_len_factor {
            model.max_len_factor = f;
        }
        model.validate()?;

        let mut train = file.train.unwrap_or_default();
        if let Some(l) = flags.lambda {
            train.lambda = l;
        }
        if let Some(s) = flags.seed {
            train.seed = s;
        }
        train.validate()?;
        let beam = flags.beam.or(file.beam).unwrap_or(DEFAULT_BEAM);
        if beam == 0 {
            anyhow::bail!("beam width must be at least 1");
        }
        Ok(Self {
            preset,
            model,
            train,
            beam,
            dump_attention: flags.dump_attention.clone(),
        })
    }
}
