//! The attended video regression network.
//!
//! Per frame, a three-layer convolutional stack with an embedded spatial
//! attention gate produces an appearance vector `p_t`; a two-layer ReLU
//! recurrence turns the sequence into hidden states `z_t`; temporal
//! attention pools the states into a summary `s` and a linear head maps
//! `s` to an age.

mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    AppearanceConfig, ConvSpec, ModelConfig, PoolSpec, ShapeChain, SpatialConfig, Variant,
    WeightInit,
};
pub use model::{record_appearance, record_forward, ForwardMode, Prediction, Trace};
pub use params::{layout, ModelParams, ParamGroup, ParamIndex, ParamInfo};
