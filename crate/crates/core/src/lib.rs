//! Attended end-to-end age regression from facial expression videos.
//!
//! The model encodes each frame with a small convolutional stack that has a
//! spatial attention gate embedded between its layers, runs the per-frame
//! features through a two-layer ReLU recurrent network, pools the hidden
//! states with temporal attention and regresses age linearly from the
//! pooled summary. Everything is differentiated by the tape in [`tensor`]
//! and trained with RMSprop on the mean absolute error.
//!
//! Module map:
//!
//! - [`tensor`]: dense tensors, kernels and reverse-mode differentiation
//! - [`attention`]: spatial attention mechanisms and temporal attention pooling
//! - [`network`]: configuration, parameters, checkpoints and the forward pass
//! - [`training`]: MAE loss, clipping, RMSprop, the fit loop and grid search
//! - [`data`]: synthetic videos, the 4253H-twice smoother, dataset files and folds
//! - [`eval`]: reports, cross-validation, threshold study and attention export

pub mod attention;
pub mod data;
pub mod error;
pub mod eval;
pub mod network;
pub mod tensor;
pub mod training;

pub use attention::{
    AttentionKind, AttentionMap, SpatialAttentionParams, SpatialMechanism, TemporalAttentionParams,
};
pub use data::{Dataset, FoldPlan, SmileKind, SyntheticSpec, VideoSample};
pub use error::{Error, Result};
pub use eval::{EvalReport, ThresholdStudy};
pub use network::{ModelConfig, ModelParams, Variant, WeightInit};
pub use tensor::{Graph, Tensor, Var};
pub use training::{OptimizerState, TrainConfig};
