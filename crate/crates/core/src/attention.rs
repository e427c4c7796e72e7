//! Spatial attention gates and temporal attention pooling.
//!
//! A spatial gate scores every location `(i, j)` of an `M × N × C` feature
//! volume with a two-layer perceptron,
//!
//! ```text
//! A_ij = sigmoid(u_ij · tanh(W_ij F_ij + b_ij) + c)
//! ```
//!
//! and multiplies every channel at that location by `A_ij`. The four
//! [`SpatialMechanism`]s differ only in which of `W`/`b` and `u` are shared
//! across locations.
//!
//! Temporal attention scores each recurrent hidden state with
//! `e_t = sigmoid(v · tanh(M z_t + b) + c)`, normalizes the scores over the
//! video and pools the states with the normalized weights.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Half-width of the uniform initialization of the attention fusion weights.
pub const ATTENTION_INIT: f64 = 0.05;

/// Which spatial attention parameters are unique per feature-map location.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMechanism {
    /// `W`, `b` and `u` shared everywhere.
    SpatiallyAgnostic,
    /// `W`, `b` and `u` all per location.
    FullySpatiallyIndexed,
    /// Shared `W`, `b`; per-location `u`.
    MediateSpatiallyIndexed,
    /// Per-location `W`, `b`; shared `u`.
    SpatiallyIndexed,
}

impl SpatialMechanism {
    pub const ALL: [SpatialMechanism; 4] = [
        SpatialMechanism::SpatiallyAgnostic,
        SpatialMechanism::FullySpatiallyIndexed,
        SpatialMechanism::MediateSpatiallyIndexed,
        SpatialMechanism::SpatiallyIndexed,
    ];

    pub fn first_layer_indexed(self) -> bool {
        matches!(self, Self::FullySpatiallyIndexed | Self::SpatiallyIndexed)
    }

    pub fn fusion_indexed(self) -> bool {
        matches!(
            self,
            Self::FullySpatiallyIndexed | Self::MediateSpatiallyIndexed
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SpatiallyAgnostic => "spatially_agnostic",
            Self::FullySpatiallyIndexed => "fully_spatially_indexed",
            Self::MediateSpatiallyIndexed => "mediate_spatially_indexed",
            Self::SpatiallyIndexed => "spatially_indexed",
        }
    }

    /// Closed-form learnable parameter count for a `grid` of `channels`-wide
    /// feature vectors and first-layer width `hidden`.
    pub fn param_count(self, grid: (usize, usize), channels: usize, hidden: usize) -> usize {
        let p = grid.0 * grid.1;
        let (d, c) = (hidden, channels);
        match self {
            Self::SpatiallyAgnostic => d * c + d + d + 1,
            Self::FullySpatiallyIndexed => p * (d * c + d + d) + 1,
            Self::SpatiallyIndexed => p * (d * c + d) + d + 1,
            Self::MediateSpatiallyIndexed => d * c + d + p * d + 1,
        }
    }
}

impl fmt::Display for SpatialMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpatialMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown spatial attention mechanism `{s}`")))
    }
}

/// Parameters of one spatial attention gate.
///
/// Shapes: `first_weights` is `[P1, d, C]`, `first_bias` is `[P1, d]`,
/// `fusion_weights` is `[P2, 1, d]` and `fusion_bias` is `[1, 1]`, where
/// `P1`/`P2` are `M·N` for per-location layers and 1 for shared ones.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAttentionParams {
    mechanism: SpatialMechanism,
    grid: (usize, usize),
    channels: usize,
    hidden: usize,
    pub first_weights: Tensor,
    pub first_bias: Tensor,
    pub fusion_weights: Tensor,
    pub fusion_bias: Tensor,
}

impl SpatialAttentionParams {
    /// Expected tensor shapes in storage order.
    pub fn shapes(
        mechanism: SpatialMechanism,
        grid: (usize, usize),
        channels: usize,
        hidden: usize,
    ) -> [Vec<usize>; 4] {
        let p = grid.0 * grid.1;
        let p1 = if mechanism.first_layer_indexed() {
            p
        } else {
            1
        };
        let p2 = if mechanism.fusion_indexed() { p } else { 1 };
        [
            vec![p1, hidden, channels],
            vec![p1, hidden],
            vec![p2, 1, hidden],
            vec![1, 1],
        ]
    }

    /// Glorot-uniform first layer, fusion weights uniform in
    /// `±ATTENTION_INIT`, biases zero.
    pub fn init<R: Rng + ?Sized>(
        mechanism: SpatialMechanism,
        grid: (usize, usize),
        channels: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let [w1, b1, u, c] = Self::shapes(mechanism, grid, channels, hidden);
        Self::from_parts(
            mechanism,
            grid,
            channels,
            hidden,
            Tensor::glorot_uniform(w1, channels, hidden, rng),
            Tensor::zeros(b1),
            Tensor::uniform(u, ATTENTION_INIT, rng),
            Tensor::zeros(c),
        )
    }

    /// Validates that the tensors follow `mechanism`'s sharing pattern.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        mechanism: SpatialMechanism,
        grid: (usize, usize),
        channels: usize,
        hidden: usize,
        first_weights: Tensor,
        first_bias: Tensor,
        fusion_weights: Tensor,
        fusion_bias: Tensor,
    ) -> Result<Self> {
        if grid.0 == 0 || grid.1 == 0 || channels == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "spatial attention needs nonzero grid/channels/hidden, got {grid:?}/{channels}/{hidden}"
            )));
        }
        let expected = Self::shapes(mechanism, grid, channels, hidden);
        let given = [&first_weights, &first_bias, &fusion_weights, &fusion_bias];
        for ((name, want), have) in ["W", "b", "u", "c"].iter().zip(&expected).zip(given) {
            if have.shape() != want.as_slice() {
                return Err(Error::Config(format!(
                    "{mechanism} attention: {name} has shape {:?}, expected {want:?}",
                    have.shape()
                )));
            }
        }
        let params = SpatialAttentionParams {
            mechanism,
            grid,
            channels,
            hidden,
            first_weights,
            first_bias,
            fusion_weights,
            fusion_bias,
        };
        let closed_form = mechanism.param_count(grid, channels, hidden);
        if params.param_count() != closed_form {
            return Err(Error::Config(format!(
                "{mechanism} attention stores {} parameters, closed form says {closed_form}",
                params.param_count()
            )));
        }
        Ok(params)
    }

    pub fn mechanism(&self) -> SpatialMechanism {
        self.mechanism
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.first_weights.len()
            + self.first_bias.len()
            + self.fusion_weights.len()
            + self.fusion_bias.len()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [
            &self.first_weights,
            &self.first_bias,
            &self.fusion_weights,
            &self.fusion_bias,
        ]
    }

    pub fn bind(&self, graph: &mut Graph) -> SpatialVars {
        SpatialVars {
            first_weights: graph.param(self.first_weights.clone()),
            first_bias: graph.param(self.first_bias.clone()),
            fusion_weights: graph.param(self.fusion_weights.clone()),
            fusion_bias: graph.param(self.fusion_bias.clone()),
        }
    }

    /// Gates `features: [M, N, C]`, returning the gated volume and the map.
    pub fn forward(&self, features: &Tensor) -> Result<(Tensor, AttentionMap)> {
        self.check_features(features.shape())?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let f = g.input(features.clone());
        let (gated, weights) = spatial_attention(&mut g, f, &vars)?;
        Ok((
            g.value(gated).clone(),
            AttentionMap::spatial(g.value(weights).clone(), None)?,
        ))
    }

    fn check_features(&self, shape: &[usize]) -> Result<()> {
        if shape != [self.grid.0, self.grid.1, self.channels] {
            return Err(Error::shape(format!(
                "spatial attention built for {}x{}x{}, got features {shape:?}",
                self.grid.0, self.grid.1, self.channels
            )));
        }
        Ok(())
    }
}

/// Graph handles for [`SpatialAttentionParams`].
#[derive(Clone, Copy, Debug)]
pub struct SpatialVars {
    pub first_weights: Var,
    pub first_bias: Var,
    pub fusion_weights: Var,
    pub fusion_bias: Var,
}

/// Records a spatial attention gate on `features: [M, N, C]`. Returns the
/// gated volume `F ⊙ A` and the weights `A: [M, N]`.
pub fn spatial_attention(g: &mut Graph, features: Var, p: &SpatialVars) -> Result<(Var, Var)> {
    let (m, n) = match *g.shape(features) {
        [m, n, _] => (m, n),
        ref s => {
            return Err(Error::shape(format!(
                "spatial attention expects [M, N, C], got {s:?}"
            )))
        }
    };
    let hidden = g.positionwise_linear(features, p.first_weights, p.first_bias)?;
    let hidden = g.tanh(hidden);
    let logits = g.positionwise_linear(hidden, p.fusion_weights, p.fusion_bias)?;
    let weights = g.sigmoid(logits);
    let weights = g.reshape(weights, [m, n])?;
    let gated = g.gate(features, weights)?;
    Ok((gated, weights))
}

/// Parameters of the temporal attention perceptron.
///
/// `weight` is `M: [n', n]`, `bias` is `b: [n']`, `fusion` is `v` stored as a
/// `[1, n']` row and `fusion_bias` is `c: [1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalAttentionParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub fusion: Tensor,
    pub fusion_bias: Tensor,
}

impl TemporalAttentionParams {
    pub fn shapes(state_size: usize, hidden: usize) -> [Vec<usize>; 4] {
        [
            vec![hidden, state_size],
            vec![hidden],
            vec![1, hidden],
            vec![1],
        ]
    }

    pub fn init<R: Rng + ?Sized>(state_size: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let [m, b, v, c] = Self::shapes(state_size, hidden);
        Self::from_parts(
            Tensor::glorot_uniform(m, state_size, hidden, rng),
            Tensor::zeros(b),
            Tensor::uniform(v, ATTENTION_INIT, rng),
            Tensor::zeros(c),
        )
    }

    pub fn from_parts(
        weight: Tensor,
        bias: Tensor,
        fusion: Tensor,
        fusion_bias: Tensor,
    ) -> Result<Self> {
        let (hidden, state) = match *weight.shape() {
            [h, n] if h >= 1 && n >= 1 => (h, n),
            ref s => {
                return Err(Error::Config(format!(
                    "temporal attention M must be [n', n], got {s:?}"
                )))
            }
        };
        let expected = Self::shapes(state, hidden);
        for ((name, want), have) in
            ["b", "v", "c"]
                .iter()
                .zip(&expected[1..])
                .zip([&bias, &fusion, &fusion_bias])
        {
            if have.shape() != want.as_slice() {
                return Err(Error::Config(format!(
                    "temporal attention: {name} has shape {:?}, expected {want:?}",
                    have.shape()
                )));
            }
        }
        Ok(TemporalAttentionParams {
            weight,
            bias,
            fusion,
            fusion_bias,
        })
    }

    pub fn state_size(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn bind(&self, graph: &mut Graph) -> TemporalVars {
        TemporalVars {
            weight: graph.param(self.weight.clone()),
            bias: graph.param(self.bias.clone()),
            fusion: graph.param(self.fusion.clone()),
            fusion_bias: graph.param(self.fusion_bias.clone()),
        }
    }
}

/// Graph handles for [`TemporalAttentionParams`].
#[derive(Clone, Copy, Debug)]
pub struct TemporalVars {
    pub weight: Var,
    pub bias: Var,
    pub fusion: Var,
    pub fusion_bias: Var,
}

/// Records `e_t` for every hidden state; returns a `[T]` vector.
pub fn temporal_scores(g: &mut Graph, states: &[Var], p: &TemporalVars) -> Result<Var> {
    if states.is_empty() {
        return Err(Error::invalid("temporal attention over an empty sequence"));
    }
    let mut scores = Vec::with_capacity(states.len());
    for &z in states {
        let h = g.linear(z, p.weight, p.bias)?;
        let h = g.tanh(h);
        let logit = g.linear(h, p.fusion, p.fusion_bias)?;
        scores.push(g.sigmoid(logit));
    }
    let stacked = g.stack(&scores)?;
    g.reshape(stacked, [states.len()])
}

/// Records `s = sum_t o_t z_t`, the attention-weighted summary.
pub fn temporal_pool(g: &mut Graph, states: &[Var], weights: Var) -> Result<Var> {
    let rows = g.stack(states)?;
    g.weighted_rows(weights, rows)
}

/// Temporal attention scores `e_t` for a sequence of hidden states.
pub fn temporal_attention_scores(
    states: &[Tensor],
    params: &TemporalAttentionParams,
) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Err(Error::invalid("temporal attention over an empty sequence"));
    }
    let n = params.state_size();
    if let Some(bad) = states.iter().find(|z| z.shape() != [n]) {
        return Err(Error::shape(format!(
            "hidden state {:?} does not match size {n}",
            bad.shape()
        )));
    }
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let zs: Vec<Var> = states.iter().map(|z| g.input(z.clone())).collect();
    let e = temporal_scores(&mut g, &zs, &vars)?;
    Ok(g.value(e).data().to_vec())
}

/// `o_t = e_t / sum(e)`.
pub fn temporal_normalize(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot normalize an empty score sequence"));
    }
    if let Some(bad) = scores.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!(
            "temporal scores must be positive and finite, got {bad}"
        )));
    }
    let total: f64 = scores.iter().sum();
    Ok(scores.iter().map(|e| e / total).collect())
}

/// `s = sum_t o_t z_t`.
pub fn temporal_summary(states: &[Tensor], weights: &[f64]) -> Result<Tensor> {
    if states.len() != weights.len() {
        return Err(Error::shape(format!(
            "{} hidden states but {} temporal weights",
            states.len(),
            weights.len()
        )));
    }
    let first = states
        .first()
        .ok_or_else(|| Error::invalid("empty sequence"))?;
    let mut s = vec![0.0; first.len()];
    for (z, o) in states.iter().zip(weights) {
        if z.shape() != first.shape() {
            return Err(Error::shape("hidden states have differing shapes"));
        }
        for (acc, v) in s.iter_mut().zip(z.data()) {
            *acc += o * v;
        }
    }
    Tensor::new(first.shape().to_vec(), s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    Spatial,
    Temporal,
}

/// Attention weights exported for inspection: an `[M, N]` spatial grid or a
/// `[T]` temporal sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub kind: AttentionKind,
    pub weights: Tensor,
    pub frame_index: Option<usize>,
}

impl AttentionMap {
    pub fn spatial(weights: Tensor, frame_index: Option<usize>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::shape(format!(
                "spatial map must be [M, N], got {:?}",
                weights.shape()
            )));
        }
        Ok(AttentionMap {
            kind: AttentionKind::Spatial,
            weights,
            frame_index,
        })
    }

    pub fn temporal(weights: Vec<f64>) -> Self {
        AttentionMap {
            kind: AttentionKind::Temporal,
            weights: Tensor::vector(weights),
            frame_index: None,
        }
    }

    /// Plain PGM (`P2`) rendering, min-max normalized to 0..=255. A constant
    /// map renders as mid-gray (128).
    pub fn to_pgm(&self) -> Result<String> {
        let (rows, cols) = match (self.kind, self.weights.shape()) {
            (AttentionKind::Spatial, &[r, c]) => (r, c),
            _ => return Err(Error::invalid("only spatial maps render as PGM")),
        };
        let data = self.weights.data();
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = format!("P2\n{cols} {rows}\n255\n");
        for row in data.chunks_exact(cols) {
            let line: Vec<String> = row
                .iter()
                .map(|&v| {
                    let level = if hi > lo {
                        ((v - lo) / (hi - lo) * 255.0).round() as u8
                    } else {
                        128
                    };
                    level.to_string()
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        Ok(out)
    }

    /// `frame_index,weight` CSV of a temporal map.
    pub fn to_csv(&self) -> Result<String> {
        if self.kind != AttentionKind::Temporal {
            return Err(Error::invalid("only temporal maps render as CSV"));
        }
        let mut out = String::from("frame_index,weight\n");
        for (t, w) in self.weights.data().iter().enumerate() {
            out.push_str(&format!("{t},{w}\n"));
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let body = match self.kind {
            AttentionKind::Spatial => self.to_pgm()?,
            AttentionKind::Temporal => self.to_csv()?,
        };
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(body.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}
