use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::fit;
use super::TrainConfig;
use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::network::ModelConfig;

/// Option sets searched exhaustively: hidden units × (conv dropout, RNN
/// dropout) × L2 strength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub hidden_units: Vec<usize>,
    pub dropout: Vec<f64>,
    pub l2_lambda: Vec<f64>,
}

impl GridSpace {
    pub fn full_size() -> Self {
        GridSpace {
            hidden_units: vec![128, 256, 512],
            dropout: vec![0.0, 0.1, 0.2, 0.4],
            l2_lambda: vec![0.0, 1e-4, 3e-4, 5e-4, 1e-3, 3e-3, 5e-3],
        }
    }

    /// Full-size option sets with hidden sizes multiplied by `scale`.
    pub fn scaled(scale: f64) -> Self {
        let mut g = Self::full_size();
        for h in &mut g.hidden_units {
            *h = ((*h as f64 * scale).round() as usize).max(1);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.hidden_units.len() * self.dropout.len() * self.dropout.len() * self.l2_lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination applied on top of `base`, hidden-major order.
    pub fn candidates(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &h in &self.hidden_units {
            for &dc in &self.dropout {
                for &dr in &self.dropout {
                    for &l2 in &self.l2_lambda {
                        out.push(TrainConfig {
                            hidden_units: Some(h),
                            dropout_conv: dc,
                            dropout_rnn: dr,
                            l2_lambda: l2,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Outcome of training one candidate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    /// Best validation MAE, or `None` when training failed.
    pub val_mae: Option<f64>,
    pub best_epoch: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridResult {
    pub best: usize,
    pub trials: Vec<Trial>,
}

impl GridResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }

    pub fn best_config(&self) -> &TrainConfig {
        &self.trials[self.best].config
    }
}

fn rank(a: &Trial, b: &Trial, model: &ModelConfig) -> Ordering {
    let mae = |t: &Trial| t.val_mae.unwrap_or(f64::INFINITY);
    let hidden = |t: &Trial| t.config.hidden_units.unwrap_or(model.hidden_units);
    mae(a)
        .total_cmp(&mae(b))
        .then(hidden(a).cmp(&hidden(b)))
        .then(a.config.l2_lambda.total_cmp(&b.config.l2_lambda))
        .then(a.index.cmp(&b.index))
}

/// Trains every candidate on `train`, scores it on `val` and returns all
/// trials with the winner: lowest validation MAE, ties to the smaller
/// hidden size, then the smaller L2 strength.
pub fn grid_search(
    model: &ModelConfig,
    train: &[&VideoSample],
    val: &[&VideoSample],
    candidates: &[TrainConfig],
) -> Result<GridResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("grid search needs at least one candidate"));
    }
    if val.is_empty() {
        return Err(Error::invalid("grid search needs a validation set"));
    }
    let trials: Vec<Trial> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| match fit(model, train, val, cfg) {
            Ok(r) => Trial {
                index,
                config: cfg.clone(),
                val_mae: r.best_val_mae,
                best_epoch: r.best_epoch,
                error: None,
            },
            Err(e) => Trial {
                index,
                config: cfg.clone(),
                val_mae: None,
                best_epoch: 0,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let best = trials
        .iter()
        .min_by(|a, b| rank(a, b, model))
        .map(|t| t.index)
        .expect("nonempty");
    Ok(GridResult { best, trials })
}
