//! Bidirectional GRU encoder, GRU decoder, readout, the parameter store and
//! its on-disk checkpoint format.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_VERSION};
pub use config::{CoverageVariant, ModelConfig, Preset};
pub(crate) use network::gru_update;
pub use network::{gru_cell_step, DecodeState, Net, StepOutput};
pub use params::{
    count_parameters, CoverageSlots, GruSlots, Layout, ParamCount, ParamGroup, ParameterStore,
    TensorKind, TensorSpec,
};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("empty source sentence")]
    EmptySource,
    #[error("coverage variant {variant} does not match state {state}")]
    VariantMismatch {
        variant: CoverageVariant,
        state: CoverageVariant,
    },
    #[error("fertility must be positive, got {value} at position {position}")]
    NonPositiveFertility { position: usize, value: f64 },
    #[error("every source position is masked")]
    AllMasked,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at target step {step}")]
    NonFiniteLoss { step: usize },
}
