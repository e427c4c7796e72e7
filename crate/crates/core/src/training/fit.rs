use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{clip_gradients, OptimizerState};
use super::TrainConfig;
use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::network::{record_forward, ForwardMode, ModelConfig, ModelParams};
use crate::tensor::{Graph, Tensor, Var};

/// Statistics of one training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-video training loss over the epoch (dropout active).
    pub train_mae: f64,
    pub val_mae: Option<f64>,
    /// Mean global L2 norm of the raw (unclipped) gradient per step.
    pub grad_norm: f64,
    /// Squared L2 norm of the decayed weights at the end of the epoch.
    pub weight_sq_norm: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Best-validation parameters, or the final ones without validation data.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: Option<f64>,
}

/// Records `mean_i |pred_i − target_i|` on the graph.
pub fn mae_graph(g: &mut Graph, predictions: &[Var], targets: &[f64]) -> Result<Var> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let preds = g.stack(predictions)?;
    let n = predictions.len();
    let preds = g.reshape(preds, [n])?;
    let y = g.input(Tensor::vector(targets.to_vec()));
    let diff = g.sub(preds, y)?;
    let abs = g.abs(diff);
    g.mean(abs)
}

/// MAE of `params` on `videos` in evaluation mode.
pub fn evaluate_mae(params: &ModelParams, videos: &[&VideoSample]) -> Result<f64> {
    let mut total = 0.0;
    for v in videos {
        total += (params.predict_age(&v.frames)? - v.age).abs();
    }
    Ok(total / videos.len() as f64)
}

/// Trains a freshly initialized model on `train`, selecting the epoch with
/// the lowest validation MAE when `val` is nonempty.
pub fn fit(
    model: &ModelConfig,
    train: &[&VideoSample],
    val: &[&VideoSample],
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = model.clone();
    if let Some(n) = cfg.hidden_units {
        model.hidden_units = n;
    }
    let mut params = ModelParams::init(&model, cfg.seed)?;
    if cfg.init_output_bias {
        let mean = train.iter().map(|v| v.age).sum::<f64>() / train.len() as f64;
        params.set_regressor_bias(mean);
    }
    let mut opt = OptimizerState::new(&params);
    let rms = cfg.rmsprop();
    let mode = ForwardMode::train(cfg.dropout_conv, cfg.dropout_rnn);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut steps = 0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut g = Graph::new();
            let vars = params.bind(&mut g);
            let mut preds = Vec::with_capacity(batch.len());
            for &i in batch {
                preds.push(
                    record_forward(&mut g, &params, &vars, &train[i].frames, mode, &mut rng)?.age,
                );
            }
            let targets: Vec<f64> = batch.iter().map(|&i| train[i].age).collect();
            let loss = mae_graph(&mut g, &preds, &targets)?;
            let loss_value = g.value(loss).item()?;
            let non_finite = |loss| Error::NonFinite {
                epoch,
                step,
                videos: batch.iter().map(|&i| train[i].id).collect(),
                loss,
            };
            if !loss_value.is_finite() {
                return Err(non_finite(loss_value));
            }
            g.backward(loss)?;
            let mut grads: Vec<Vec<f64>> = vars
                .iter()
                .zip(params.tensors())
                .map(|(&v, t)| {
                    g.grad(v)
                        .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
                })
                .collect();
            let sq: f64 = grads.iter().flatten().map(|x| x * x).sum();
            if !sq.is_finite() {
                return Err(non_finite(loss_value));
            }
            for gr in &mut grads {
                clip_gradients(gr, cfg.clip_min, cfg.clip_max);
            }
            opt.rmsprop_step(&mut params, &grads, &rms)?;
            loss_sum += loss_value * batch.len() as f64;
            norm_sum += sq.sqrt();
            steps += 1;
        }
        let train_mae = loss_sum / train.len() as f64;
        let val_mae = if val.is_empty() {
            None
        } else {
            Some(evaluate_mae(&params, val)?)
        };
        history.push(EpochRecord {
            epoch,
            train_mae,
            val_mae,
            grad_norm: norm_sum / steps as f64,
            weight_sq_norm: params.decayed_sq_norm(),
        });
        let Some(score) = val_mae else { continue };
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }

    let last = history.len();
    Ok(match best {
        Some((score, epoch, params)) => FitResult {
            params,
            history,
            best_epoch: epoch,
            best_val_mae: Some(score),
        },
        None => FitResult {
            params,
            history,
            best_epoch: last,
            best_val_mae: None,
        },
    })
}

/// `epoch,train_mae,val_mae,grad_norm` rows; `val_mae` is empty when no
/// validation set was used.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mae,val_mae,grad_norm\n");
    for r in history {
        let val = r.val_mae.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_mae, val, r.grad_norm);
    }
    out
}
