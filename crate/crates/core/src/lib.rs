//! Attention-based encoder-decoder sequence transduction with coverage-aware
//! attention: linguistic coverage (optionally normalized by predicted
//! fertility) and recurrent NN coverage fed back into the alignment model.

pub mod attention;
pub mod cli;
pub mod corpus;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod tensor;
pub mod train;
