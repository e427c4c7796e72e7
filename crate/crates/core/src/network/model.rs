use rand::Rng;

use super::config::Variant;
use super::params::{ConvIndex, DenseIndex, ModelParams};
use crate::attention::{
    spatial_attention, temporal_pool, temporal_scores, AttentionMap, SpatialVars, TemporalVars,
};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Dropout settings for one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForwardMode {
    pub training: bool,
    pub dropout_conv: f64,
    pub dropout_rnn: f64,
}

impl ForwardMode {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train(dropout_conv: f64, dropout_rnn: f64) -> Self {
        ForwardMode {
            training: true,
            dropout_conv,
            dropout_rnn,
        }
    }
}

/// Graph handles produced by [`record_forward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// Predicted age, shape `[1]`.
    pub age: Var,
    /// Per-frame spatial attention weights `[M, N]` (empty without the gate).
    pub spatial: Vec<Var>,
    /// Temporal weights `o: [T]` (full variant only).
    pub temporal: Option<Var>,
    /// Per-frame appearance features `p_t`.
    pub features: Vec<Var>,
    /// Top-layer recurrent states `z_t`.
    pub states: Vec<Var>,
}

/// Model output converted to plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub age: f64,
    pub spatial: Vec<AttentionMap>,
    pub temporal: Option<AttentionMap>,
}

fn conv_block(
    g: &mut Graph,
    x: Var,
    vars: &[Var],
    idx: ConvIndex,
    stride: usize,
    padding: usize,
) -> Result<Var> {
    let y = g.conv2d(x, vars[idx.kernels], vars[idx.bias], stride, padding)?;
    Ok(g.relu(y))
}

fn dense_relu(g: &mut Graph, x: Var, vars: &[Var], idx: DenseIndex) -> Result<Var> {
    let y = g.linear(x, vars[idx.weight], vars[idx.bias])?;
    Ok(g.relu(y))
}

fn check_frame(params: &ModelParams, frame: &Tensor) -> Result<()> {
    let s = params.config().appearance.input_size;
    if frame.shape() != [s, s, 1] {
        return Err(Error::shape(format!(
            "frame shape {:?}, model expects [{s}, {s}, 1]",
            frame.shape()
        )));
    }
    Ok(())
}

/// Records the appearance stack for one frame: returns `p_t` and the
/// spatial weights when the gate is active.
pub fn record_appearance<R: Rng + ?Sized>(
    g: &mut Graph,
    params: &ModelParams,
    vars: &[Var],
    frame: Var,
    mode: ForwardMode,
    rng: &mut R,
) -> Result<(Var, Option<Var>)> {
    let cfg = params.config();
    let a = &cfg.appearance;
    let idx = params.index();
    let spatial = idx.spatial.map(|s| SpatialVars {
        first_weights: vars[s.weight],
        first_bias: vars[s.bias],
        fusion_weights: vars[s.fusion],
        fusion_bias: vars[s.fusion_bias],
    });
    let mut map = None;
    let mut attend = |g: &mut Graph, x: Var, layer: usize, after_pool: bool| -> Result<Var> {
        match spatial {
            Some(sv) if a.attention_layer == layer && a.attention_after_pool == after_pool => {
                let (gated, weights) = spatial_attention(g, x, &sv)?;
                map = Some(weights);
                Ok(gated)
            }
            _ => Ok(x),
        }
    };

    let mut x = conv_block(g, frame, vars, idx.conv1, a.conv1.stride, a.conv1.padding)?;
    x = attend(g, x, 1, false)?;
    x = g.local_response_norm(x, a.lrn)?;
    x = g.maxpool2d(x, a.pool.window, a.pool.stride)?;
    x = attend(g, x, 1, true)?;

    x = conv_block(g, x, vars, idx.conv2, a.conv2.stride, a.conv2.padding)?;
    x = attend(g, x, 2, false)?;
    x = g.local_response_norm(x, a.lrn)?;
    x = g.maxpool2d(x, a.pool.window, a.pool.stride)?;
    x = attend(g, x, 2, true)?;

    x = conv_block(g, x, vars, idx.conv3, a.conv3.stride, a.conv3.padding)?;
    x = attend(g, x, 3, false)?;

    let flat_len = g.value(x).len();
    let flat = g.reshape(x, [flat_len])?;
    let h = dense_relu(g, flat, vars, idx.fc1)?;
    let h = g.dropout(h, mode.dropout_conv, mode.training, rng)?;
    let p = dense_relu(g, h, vars, idx.fc2)?;
    Ok((p, map))
}

/// Records the whole model on a video and returns the handles of interest.
pub fn record_forward<R: Rng + ?Sized>(
    g: &mut Graph,
    params: &ModelParams,
    vars: &[Var],
    frames: &[Tensor],
    mode: ForwardMode,
    rng: &mut R,
) -> Result<Trace> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot run the model on an empty video"));
    }
    let idx = *params.index();
    let mut features = Vec::with_capacity(frames.len());
    let mut spatial = Vec::new();
    for frame in frames {
        check_frame(params, frame)?;
        let x = g.input(frame.clone());
        let (p, map) = record_appearance(g, params, vars, x, mode, rng)?;
        features.push(p);
        spatial.extend(map);
    }
    let (k, b) = (vars[idx.regressor.weight], vars[idx.regressor.bias]);

    if params.config().variant == Variant::CnnOnly {
        let mut per_frame = Vec::with_capacity(features.len());
        for &p in &features {
            per_frame.push(g.linear(p, k, b)?);
        }
        let stacked = g.stack(&per_frame)?;
        let mean = g.mean(stacked)?;
        let age = g.reshape(mean, [1])?;
        return Ok(Trace {
            age,
            spatial,
            temporal: None,
            features,
            states: Vec::new(),
        });
    }

    let rnn = idx
        .rnn
        .ok_or_else(|| Error::Config("recurrent parameters missing".into()))?;
    let mut prev: [Option<Var>; 2] = [None, None];
    let mut states = Vec::with_capacity(features.len());
    for &p in &features {
        let mut input = p;
        for (layer, li) in rnn.iter().enumerate() {
            let mut pre = g.linear(input, vars[li.input], vars[li.bias])?;
            // z_0 = 0, so the recurrent term vanishes on the first frame
            if let Some(z_prev) = prev[layer] {
                let rec = g.matvec(vars[li.recurrent], z_prev)?;
                pre = g.add(pre, rec)?;
            }
            let z = g.relu(pre);
            prev[layer] = Some(z);
            input = g.dropout(z, mode.dropout_rnn, mode.training, rng)?;
        }
        states.push(input);
    }

    let weights = match idx.temporal {
        Some(t) => {
            let tv = TemporalVars {
                weight: vars[t.weight],
                bias: vars[t.bias],
                fusion: vars[t.fusion],
                fusion_bias: vars[t.fusion_bias],
            };
            let e = temporal_scores(g, &states, &tv)?;
            Some(g.normalize_sum(e)?)
        }
        None => None,
    };
    let pool = match weights {
        Some(o) => o,
        None => g.input(Tensor::full([states.len()], 1.0 / states.len() as f64)),
    };
    let summary = temporal_pool(g, &states, pool)?;
    let age = g.linear(summary, k, b)?;
    Ok(Trace {
        age,
        spatial,
        temporal: weights,
        features,
        states,
    })
}

impl ModelParams {
    /// Deterministic evaluation-mode prediction.
    pub fn predict(&self, frames: &[Tensor]) -> Result<Prediction> {
        let mut g = Graph::new();
        let vars = self.bind_constants(&mut g);
        let trace = record_forward(&mut g, self, &vars, frames, ForwardMode::eval(), &mut NoRng)?;
        let spatial = trace
            .spatial
            .iter()
            .enumerate()
            .map(|(t, &a)| AttentionMap::spatial(g.value(a).clone(), Some(t)))
            .collect::<Result<Vec<_>>>()?;
        let temporal = trace
            .temporal
            .map(|o| AttentionMap::temporal(g.value(o).data().to_vec()));
        Ok(Prediction {
            age: g.value(trace.age).item()?,
            spatial,
            temporal,
        })
    }

    /// Predicted age only.
    pub fn predict_age(&self, frames: &[Tensor]) -> Result<f64> {
        let mut g = Graph::new();
        let vars = self.bind_constants(&mut g);
        let trace = record_forward(&mut g, self, &vars, frames, ForwardMode::eval(), &mut NoRng)?;
        g.value(trace.age).item()
    }

    /// Appearance features `p` and spatial map for a single frame.
    pub fn appearance_forward(&self, frame: &Tensor) -> Result<(Tensor, Option<AttentionMap>)> {
        check_frame(self, frame)?;
        let mut g = Graph::new();
        let vars = self.bind_constants(&mut g);
        let x = g.input(frame.clone());
        let (p, map) = record_appearance(&mut g, self, &vars, x, ForwardMode::eval(), &mut NoRng)?;
        let map = map
            .map(|a| AttentionMap::spatial(g.value(a).clone(), None))
            .transpose()?;
        Ok((g.value(p).clone(), map))
    }

    /// One step of the two-layer recurrence: `prev` holds `[z¹_{t-1}, z²_{t-1}]`.
    pub fn rnn_step(&self, input: &Tensor, prev: &[Tensor; 2]) -> Result<[Tensor; 2]> {
        let rnn = self.index().rnn.ok_or_else(|| {
            Error::Config(format!(
                "variant {} has no recurrent module",
                self.config().variant
            ))
        })?;
        let mut g = Graph::new();
        let mut x = g.input(input.clone());
        let mut out = Vec::with_capacity(2);
        for (li, z_prev) in rnn.iter().zip(prev) {
            let w = g.input(self.tensors()[li.input].clone());
            let v = g.input(self.tensors()[li.recurrent].clone());
            let b = g.input(self.tensors()[li.bias].clone());
            let zp = g.input(z_prev.clone());
            let pre = g.linear(x, w, b)?;
            let rec = g.matvec(v, zp)?;
            let pre = g.add(pre, rec)?;
            x = g.relu(pre);
            out.push(g.value(x).clone());
        }
        let z2 = out.pop().expect("two layers");
        let z1 = out.pop().expect("two layers");
        Ok([z1, z2])
    }

    fn bind_constants(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors().iter().map(|t| g.input(t.clone())).collect()
    }
}

/// Placeholder generator for evaluation passes, which never sample.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("evaluation mode draws no random numbers")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("evaluation mode draws no random numbers")
    }

    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("evaluation mode draws no random numbers")
    }
}
