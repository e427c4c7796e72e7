use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, WeightInit};
use crate::attention::{SpatialAttentionParams, TemporalAttentionParams, ATTENTION_INIT};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Module a parameter tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Conv1,
    Conv2,
    Conv3,
    Fc1,
    Fc2,
    SpatialAttention,
    Rnn1,
    Rnn2,
    TemporalAttention,
    Regressor,
}

impl ParamGroup {
    /// Layers followed by a ReLU.
    pub fn is_relu(self) -> bool {
        use ParamGroup::*;
        matches!(self, Conv1 | Conv2 | Conv3 | Fc1 | Fc2 | Rnn1 | Rnn2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Attention,
    Zeros,
}

/// Description of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    /// Whether L2 regularization applies (weights only).
    pub decay: bool,
    init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvIndex {
    pub kernels: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseIndex {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecurrentIndex {
    pub input: usize,
    pub recurrent: usize,
    pub bias: usize,
}

/// Quad of `(first weights, first bias, fusion weights, fusion bias)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionIndex {
    pub weight: usize,
    pub bias: usize,
    pub fusion: usize,
    pub fusion_bias: usize,
}

/// Positions of every parameter tensor in [`ModelParams::tensors`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamIndex {
    pub conv1: ConvIndex,
    pub conv2: ConvIndex,
    pub conv3: ConvIndex,
    pub fc1: DenseIndex,
    pub fc2: DenseIndex,
    pub spatial: Option<AttentionIndex>,
    pub rnn: Option<[RecurrentIndex; 2]>,
    pub temporal: Option<AttentionIndex>,
    pub regressor: DenseIndex,
}

struct LayoutBuilder(Vec<ParamInfo>);

impl LayoutBuilder {
    fn push(
        &mut self,
        name: &'static str,
        group: ParamGroup,
        shape: Vec<usize>,
        decay: bool,
        init: Init,
    ) -> usize {
        self.0.push(ParamInfo {
            name,
            group,
            shape,
            decay,
            init,
        });
        self.0.len() - 1
    }

    fn weight(
        &mut self,
        name: &'static str,
        group: ParamGroup,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
    ) -> usize {
        self.push(name, group, shape, true, Init::Glorot { fan_in, fan_out })
    }

    fn bias(&mut self, name: &'static str, group: ParamGroup, shape: Vec<usize>) -> usize {
        self.push(name, group, shape, false, Init::Zeros)
    }
}

/// Declared order of all parameter tensors for `config`.
pub fn layout(config: &ModelConfig) -> Result<(Vec<ParamInfo>, ParamIndex)> {
    use ParamGroup::*;
    let shapes = config.validate()?;
    let a = &config.appearance;
    let n = config.hidden_units;
    let mut b = LayoutBuilder(Vec::new());

    let conv = |b: &mut LayoutBuilder, group, spec: &super::config::ConvSpec, cin: usize| {
        let (k, cout) = (spec.kernel, spec.out_channels);
        ConvIndex {
            kernels: b.weight(
                "kernels",
                group,
                vec![k, k, cin, cout],
                k * k * cin,
                k * k * cout,
            ),
            bias: b.bias("bias", group, vec![cout]),
        }
    };
    let conv1 = conv(&mut b, Conv1, &a.conv1, 1);
    let conv2 = conv(&mut b, Conv2, &a.conv2, a.conv1.out_channels);
    let conv3 = conv(&mut b, Conv3, &a.conv3, a.conv2.out_channels);
    let fc1 = DenseIndex {
        weight: b.weight(
            "weight",
            Fc1,
            vec![a.fc1_width, shapes.flat],
            shapes.flat,
            a.fc1_width,
        ),
        bias: b.bias("bias", Fc1, vec![a.fc1_width]),
    };
    let fc2 = DenseIndex {
        weight: b.weight("weight", Fc2, vec![n, a.fc1_width], a.fc1_width, n),
        bias: b.bias("bias", Fc2, vec![n]),
    };
    let spatial = config.variant.has_spatial().then(|| {
        let (m, w, c) = shapes.attention;
        let [w1, b1, u, cb] = SpatialAttentionParams::shapes(
            config.spatial.mechanism,
            (m, w),
            c,
            config.spatial.hidden,
        );
        AttentionIndex {
            weight: b.weight(
                "first_weights",
                SpatialAttention,
                w1,
                c,
                config.spatial.hidden,
            ),
            bias: b.push("first_bias", SpatialAttention, b1, false, Init::Zeros),
            fusion: b.push("fusion_weights", SpatialAttention, u, true, Init::Attention),
            fusion_bias: b.push("fusion_bias", SpatialAttention, cb, false, Init::Zeros),
        }
    });
    let rnn = config.variant.has_recurrent().then(|| {
        let mut layer = |group, din: usize| RecurrentIndex {
            input: b.weight("input", group, vec![n, din], din, n),
            recurrent: b.weight("recurrent", group, vec![n, n], n, n),
            bias: b.bias("bias", group, vec![n]),
        };
        [layer(Rnn1, n), layer(Rnn2, n)]
    });
    let temporal = config.variant.has_temporal().then(|| {
        let [m, tb, v, c] = TemporalAttentionParams::shapes(n, config.temporal_hidden());
        AttentionIndex {
            weight: b.weight("weight", TemporalAttention, m, n, config.temporal_hidden()),
            bias: b.push("bias", TemporalAttention, tb, false, Init::Zeros),
            fusion: b.push("fusion", TemporalAttention, v, true, Init::Attention),
            fusion_bias: b.push("fusion_bias", TemporalAttention, c, false, Init::Zeros),
        }
    });
    let regressor = DenseIndex {
        weight: b.weight("weight", Regressor, vec![1, n], n, 1),
        bias: b.bias("bias", Regressor, vec![1]),
    };
    let index = ParamIndex {
        conv1,
        conv2,
        conv3,
        fc1,
        fc2,
        spatial,
        rnn,
        temporal,
        regressor,
    };
    Ok((b.0, index))
}

/// The full learnable parameter set, stored as a flat list of tensors in
/// declared order (see [`layout`]).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    seed: u64,
    infos: Vec<ParamInfo>,
    index: ParamIndex,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Glorot-uniform weights (He-uniform for ReLU layers if configured),
    /// small uniform attention fusion weights, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let (infos, _) = layout(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = infos
            .iter()
            .map(|info| match info.init {
                Init::Glorot { fan_in, .. }
                    if config.weight_init == WeightInit::He && info.group.is_relu() =>
                {
                    Tensor::uniform(info.shape.clone(), (6.0 / fan_in as f64).sqrt(), &mut rng)
                }
                Init::Glorot { fan_in, fan_out } => {
                    Tensor::glorot_uniform(info.shape.clone(), fan_in, fan_out, &mut rng)
                }
                Init::Attention => Tensor::uniform(info.shape.clone(), ATTENTION_INIT, &mut rng),
                Init::Zeros => Tensor::zeros(info.shape.clone()),
            })
            .collect();
        Self::from_tensors(config.clone(), seed, tensors)
    }

    pub fn from_tensors(config: ModelConfig, seed: u64, tensors: Vec<Tensor>) -> Result<Self> {
        let (infos, index) = layout(&config)?;
        if tensors.len() != infos.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                infos.len(),
                tensors.len()
            )));
        }
        for (info, t) in infos.iter().zip(&tensors) {
            if t.shape() != info.shape.as_slice() {
                return Err(Error::Config(format!(
                    "{:?}.{}: shape {:?}, expected {:?}",
                    info.group,
                    info.name,
                    t.shape(),
                    info.shape
                )));
            }
        }
        let params = ModelParams {
            config,
            seed,
            infos,
            index,
            tensors,
        };
        let closed_form = params.config.param_count()?;
        if params.param_count() != closed_form {
            return Err(Error::Config(format!(
                "parameter audit failed: {} stored vs {closed_form} expected",
                params.param_count()
            )));
        }
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn index(&self) -> &ParamIndex {
        &self.index
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every tensor as a trainable leaf, in declared order.
    pub fn bind(&self, graph: &mut Graph) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| graph.param(t.clone()))
            .collect()
    }

    pub fn spatial_attention(&self) -> Option<SpatialAttentionParams> {
        let idx = self.index.spatial?;
        let (m, n, c) = self.config.validate().ok()?.attention;
        SpatialAttentionParams::from_parts(
            self.config.spatial.mechanism,
            (m, n),
            c,
            self.config.spatial.hidden,
            self.tensors[idx.weight].clone(),
            self.tensors[idx.bias].clone(),
            self.tensors[idx.fusion].clone(),
            self.tensors[idx.fusion_bias].clone(),
        )
        .ok()
    }

    pub fn temporal_attention(&self) -> Option<TemporalAttentionParams> {
        let idx = self.index.temporal?;
        TemporalAttentionParams::from_parts(
            self.tensors[idx.weight].clone(),
            self.tensors[idx.bias].clone(),
            self.tensors[idx.fusion].clone(),
            self.tensors[idx.fusion_bias].clone(),
        )
        .ok()
    }

    pub fn regressor_bias(&self) -> f64 {
        self.tensors[self.index.regressor.bias].data()[0]
    }

    pub fn set_regressor_bias(&mut self, value: f64) {
        self.tensors[self.index.regressor.bias].data_mut()[0] = value;
    }

    /// Sum of squared entries per module.
    pub fn group_sq_norms(&self) -> Vec<(ParamGroup, f64)> {
        let mut out: Vec<(ParamGroup, f64)> = Vec::new();
        for (info, t) in self.infos.iter().zip(&self.tensors) {
            match out.last_mut() {
                Some((g, acc)) if *g == info.group => *acc += t.sum_squares(),
                _ => out.push((info.group, t.sum_squares())),
            }
        }
        out
    }

    /// Squared L2 norm of the weights subject to decay.
    pub fn decayed_sq_norm(&self) -> f64 {
        self.infos
            .iter()
            .zip(&self.tensors)
            .filter(|(i, _)| i.decay)
            .map(|(_, t)| t.sum_squares())
            .sum()
    }
}
