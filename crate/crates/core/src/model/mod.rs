//! Dual-target graph attention network.
//!
//! Layers `1..L-1` are attention layers shared by both targets. The final
//! layer runs twice with task-specific attention, producing `Z_CI` and
//! `Z_Price`, and each latent feeds its own two-layer head with a scalar
//! output per node.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{
    attention_layer, attention_layer_on_tape, forward, forward_on_tape, head, ForwardActivations, ParamVars,
    TapeForward, Task, SCORE_SLOPE,
};
pub use params::{init_bound, init_params, AttentionParams, HeadParams, ModelConfig, ModelParams, PRICE_BRANCH};
