//! Model parameters, configuration, and the forward pass.

pub mod config;
pub mod forward;
pub mod params;
pub mod prep;
pub mod state;

pub use config::{AlignmentSign, ModelConfig, Variant};
pub use forward::{argmax_rows, forward_full, ForwardOptions, ForwardOutput, Mode};
pub use params::{
    check_schema, load_checkpoint, save_checkpoint, ModelCard, ParameterSet, SHARED,
};
pub use prep::GraphPrep;
pub use state::{LayerAttention, LayerState};
