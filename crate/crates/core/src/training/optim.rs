use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ModelParams;

/// Mean absolute error `(1/N) Σ |ŷ − y|`.
pub fn mae_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("MAE of an empty set"));
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).abs())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Clamps every entry into `[lo, hi]`.
pub fn clip_gradients(grads: &mut [f64], lo: f64, hi: f64) {
    for g in grads {
        *g = g.clamp(lo, hi);
    }
}

/// RMSprop hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub l2_lambda: f64,
}

/// Running mean of squared gradients per parameter entry.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    accumulators: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_shapes(params.tensors().iter().map(|t| t.len()))
    }

    pub fn with_shapes(lens: impl IntoIterator<Item = usize>) -> Self {
        OptimizerState {
            accumulators: lens.into_iter().map(|n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    /// One RMSprop update of a single flat parameter buffer:
    /// `g' = g + λ·θ` (when `decay`), `acc ← ρ·acc + (1−ρ)·g'²`,
    /// `θ ← θ − lr·g'/√(acc + ε)`.
    pub fn update_slot(
        &mut self,
        slot: usize,
        theta: &mut [f64],
        grad: &[f64],
        decay: bool,
        cfg: &RmsPropConfig,
    ) {
        let acc = &mut self.accumulators[slot];
        debug_assert_eq!(acc.len(), theta.len());
        let lambda = if decay { cfg.l2_lambda } else { 0.0 };
        for ((th, &g), a) in theta.iter_mut().zip(grad).zip(acc.iter_mut()) {
            let g = g + lambda * *th;
            *a = cfg.decay * *a + (1.0 - cfg.decay) * g * g;
            *th -= cfg.learning_rate * g / (*a + cfg.epsilon).sqrt();
        }
    }

    /// Applies one update to every parameter tensor of `params`.
    pub fn rmsprop_step(
        &mut self,
        params: &mut ModelParams,
        grads: &[Vec<f64>],
        cfg: &RmsPropConfig,
    ) -> Result<()> {
        if grads.len() != params.tensors().len() || grads.len() != self.accumulators.len() {
            return Err(Error::shape(format!(
                "{} gradient buffers for {} parameter tensors",
                grads.len(),
                params.tensors().len()
            )));
        }
        let decays: Vec<bool> = params.infos().iter().map(|i| i.decay).collect();
        for (slot, (t, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            if g.len() != t.len() {
                return Err(Error::shape(format!(
                    "gradient {slot} has {} entries, tensor {}",
                    g.len(),
                    t.len()
                )));
            }
            self.update_slot(slot, t.data_mut(), g, decays[slot], cfg);
        }
        self.step += 1;
        Ok(())
    }
}
