//! End-to-end optimization: MAE loss, gradient clipping, RMSprop with L2
//! regularization, the epoch loop with validation-based checkpoint
//! selection, and hyperparameter grid search.

mod fit;
mod grid;
mod optim;

pub use fit::{evaluate_mae, fit, history_csv, mae_graph, EpochRecord, FitResult};
pub use grid::{grid_search, GridResult, GridSpace, Trial};
pub use optim::{clip_gradients, mae_loss, OptimizerState, RmsPropConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub clip_min: f64,
    pub clip_max: f64,
    pub l2_lambda: f64,
    pub dropout_conv: f64,
    pub dropout_rnn: f64,
    /// Overrides the model's recurrent hidden size when set.
    pub hidden_units: Option<usize>,
    pub epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    pub batch_size: usize,
    /// Start the regressor bias at the mean training age.
    pub init_output_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            clip_min: -5.0,
            clip_max: 5.0,
            l2_lambda: 0.0,
            dropout_conv: 0.0,
            dropout_rnn: 0.0,
            hidden_units: None,
            epochs: 100,
            patience: Some(20),
            seed: 0,
            batch_size: 1,
            init_output_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_min.partial_cmp(&self.clip_max) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(format!(
                "clip_min {} must be below clip_max {}",
                self.clip_min, self.clip_max
            )));
        }
        for (name, rate) in [
            ("dropout_conv", self.dropout_conv),
            ("dropout_rnn", self.dropout_rnn),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!(
                    "{name} must be in [0, 1), got {rate}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rmsprop_decay)
            || self.rmsprop_epsilon <= 0.0
            || self.learning_rate < 0.0
        {
            return Err(Error::Config("invalid RMSprop settings".into()));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Config("l2_lambda must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.rmsprop_decay,
            epsilon: self.rmsprop_epsilon,
            l2_lambda: self.l2_lambda,
        }
    }
}
