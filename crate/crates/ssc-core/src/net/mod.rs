//! The scene completion network: dilated encoder, global aggregation,
//! multi-level feature aggregation, and the conditioned two-step head.

mod config;
mod model;
mod params;
mod plan;
mod receptive;

pub use config::NetworkConfig;
pub use model::{
    aggregate, backward, conditioned_head, encoder_backward, encoder_forward, forward, ga_module,
    ActivationCache, BackwardOut, EncoderOut, ForwardOut, HeadOut,
};
pub use params::{init_params, NormState, ParameterSet};
pub use plan::{plan_ops, ConvLayer, OpKind, PlannedOp};
pub use receptive::{encoder_input_interval, receptive_field};
