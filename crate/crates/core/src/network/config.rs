use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::SpatialMechanism;
use crate::error::{Error, Result};
use crate::tensor::LrnParams;

/// Which modules are active; the ladder adds one module per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Per-frame regression from the appearance features, averaged over frames.
    CnnOnly,
    /// Recurrent dynamics pooled with uniform weights.
    CnnRnn,
    /// As `CnnRnn` with the spatial attention gate.
    CnnRnnSpatial,
    /// Everything, including temporal attention pooling.
    Full,
}

impl Variant {
    pub const LADDER: [Variant; 4] = [
        Variant::CnnOnly,
        Variant::CnnRnn,
        Variant::CnnRnnSpatial,
        Variant::Full,
    ];

    pub fn has_spatial(self) -> bool {
        matches!(self, Variant::CnnRnnSpatial | Variant::Full)
    }

    pub fn has_recurrent(self) -> bool {
        self != Variant::CnnOnly
    }

    pub fn has_temporal(self) -> bool {
        self == Variant::Full
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::CnnOnly => "cnn_only",
            Variant::CnnRnn => "cnn_rnn",
            Variant::CnnRnnSpatial => "cnn_rnn_spatial",
            Variant::Full => "full",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::LADDER
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model variant `{s}`")))
    }
}

impl FromStr for WeightInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glorot" => Ok(WeightInit::Glorot),
            "he" => Ok(WeightInit::He),
            _ => Err(Error::invalid(format!("unknown weight init `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    fn out_size(&self, size: usize) -> Option<usize> {
        let padded = size + 2 * self.padding;
        (self.kernel >= 1 && self.stride >= 1 && self.kernel <= padded)
            .then(|| (padded - self.kernel) / self.stride + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl PoolSpec {
    fn out_size(&self, size: usize) -> Option<usize> {
        (self.window >= 1 && self.stride >= 1 && self.window <= size)
            .then(|| (size - self.window) / self.stride + 1)
    }
}

/// The per-frame convolutional stack.
///
/// conv1 → ReLU → LRN → pool → conv2 → ReLU → LRN → pool → conv3 → ReLU →
/// fc1 → ReLU → fc2 → ReLU, with the spatial attention gate inserted after
/// the ReLU of conv layer `attention_layer` (or after its pooling when
/// `attention_after_pool` is set).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppearanceConfig {
    pub input_size: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub conv3: ConvSpec,
    pub pool: PoolSpec,
    pub lrn: LrnParams,
    pub fc1_width: usize,
    pub attention_layer: usize,
    #[serde(default)]
    pub attention_after_pool: bool,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        AppearanceConfig {
            input_size: 114,
            conv1: ConvSpec {
                out_channels: 128,
                kernel: 7,
                stride: 2,
                padding: 3,
            },
            conv2: ConvSpec {
                out_channels: 256,
                kernel: 5,
                stride: 1,
                padding: 2,
            },
            conv3: ConvSpec {
                out_channels: 256,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            pool: PoolSpec {
                window: 2,
                stride: 2,
            },
            lrn: LrnParams::default(),
            fc1_width: 4096,
            attention_layer: 2,
            attention_after_pool: false,
        }
    }
}

/// Feature-map shapes `(H, W, C)` at every stage of the appearance stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeChain {
    pub input: (usize, usize, usize),
    pub conv1: (usize, usize, usize),
    pub pool1: (usize, usize, usize),
    pub conv2: (usize, usize, usize),
    pub pool2: (usize, usize, usize),
    pub conv3: (usize, usize, usize),
    pub flat: usize,
    /// Feature volume the spatial gate sees.
    pub attention: (usize, usize, usize),
}

impl AppearanceConfig {
    pub fn shapes(&self) -> Result<ShapeChain> {
        let bad = |stage: &str| {
            Error::Config(format!(
                "feature map vanishes at {stage} for input {}",
                self.input_size
            ))
        };
        let s0 = self.input_size;
        if s0 == 0 {
            return Err(bad("input"));
        }
        let s1 = self.conv1.out_size(s0).ok_or_else(|| bad("conv1"))?;
        let p1 = self.pool.out_size(s1).ok_or_else(|| bad("pool1"))?;
        let s2 = self.conv2.out_size(p1).ok_or_else(|| bad("conv2"))?;
        let p2 = self.pool.out_size(s2).ok_or_else(|| bad("pool2"))?;
        let s3 = self.conv3.out_size(p2).ok_or_else(|| bad("conv3"))?;
        let (c1, c2, c3) = (
            self.conv1.out_channels,
            self.conv2.out_channels,
            self.conv3.out_channels,
        );
        if c1 == 0 || c2 == 0 || c3 == 0 || self.fc1_width == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let attention = match (self.attention_layer, self.attention_after_pool) {
            (1, false) => (s1, s1, c1),
            (1, true) => (p1, p1, c1),
            (2, false) => (s2, s2, c2),
            (2, true) => (p2, p2, c2),
            (3, false) => (s3, s3, c3),
            (3, true) => return Err(Error::Config("conv3 has no pooling to attend after".into())),
            (l, _) => {
                return Err(Error::Config(format!(
                    "attention layer must be 1, 2 or 3, got {l}"
                )))
            }
        };
        Ok(ShapeChain {
            input: (s0, s0, 1),
            conv1: (s1, s1, c1),
            pool1: (p1, p1, c1),
            conv2: (s2, s2, c2),
            pool2: (p2, p2, c2),
            conv3: (s3, s3, c3),
            flat: s3 * s3 * c3,
            attention,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialConfig {
    pub mechanism: SpatialMechanism,
    /// First-layer width `d` of the attention perceptron.
    pub hidden: usize,
}

/// Weight initializer for the ReLU layers (convolutions, fc1, fc2 and both
/// recurrent layers). Attention and regressor weights are always Glorot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    #[default]
    Glorot,
    /// Uniform on `±sqrt(6 / fan_in)`.
    He,
}

/// Complete architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub appearance: AppearanceConfig,
    /// Recurrent hidden size `n`; also the width of fc2.
    pub hidden_units: usize,
    pub spatial: SpatialConfig,
    /// Width `n'` of the temporal attention perceptron; `ceil(n / 2)` if unset.
    #[serde(default)]
    pub temporal_hidden: Option<usize>,
    #[serde(default)]
    pub weight_init: WeightInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            appearance: AppearanceConfig::default(),
            hidden_units: 256,
            spatial: SpatialConfig {
                mechanism: SpatialMechanism::SpatiallyIndexed,
                hidden: 64,
            },
            temporal_hidden: None,
            weight_init: WeightInit::Glorot,
        }
    }
}

fn scale_width(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).round() as usize).max(1)
}

impl ModelConfig {
    /// The full-size architecture on 114×114 frames.
    pub fn full_size() -> Self {
        Self::default()
    }

    /// Full-size geometry with every width multiplied by `scale` and a
    /// different input resolution.
    pub fn scaled(scale: f64, input_size: usize) -> Self {
        let mut cfg = Self::default();
        cfg.rescale(scale);
        cfg.appearance.input_size = input_size;
        cfg
    }

    /// 16×16 input, widths divided by 16; fast enough for gradient checks.
    pub fn toy() -> Self {
        Self::scaled(1.0 / 16.0, 16)
    }

    /// Multiplies every layer width by `scale` (minimum 1).
    pub fn rescale(&mut self, scale: f64) {
        let a = &mut self.appearance;
        a.conv1.out_channels = scale_width(a.conv1.out_channels, scale);
        a.conv2.out_channels = scale_width(a.conv2.out_channels, scale);
        a.conv3.out_channels = scale_width(a.conv3.out_channels, scale);
        a.fc1_width = scale_width(a.fc1_width, scale);
        self.hidden_units = scale_width(self.hidden_units, scale);
        self.spatial.hidden = scale_width(self.spatial.hidden, scale);
        if let Some(t) = &mut self.temporal_hidden {
            *t = scale_width(*t, scale);
        }
    }

    pub fn temporal_hidden(&self) -> usize {
        self.temporal_hidden
            .unwrap_or(self.hidden_units.div_ceil(2))
    }

    pub fn validate(&self) -> Result<ShapeChain> {
        if self.hidden_units == 0 || self.spatial.hidden == 0 || self.temporal_hidden() == 0 {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        self.appearance.shapes()
    }

    /// Closed-form learnable parameter count, derived from the
    /// configuration alone.
    pub fn param_count(&self) -> Result<usize> {
        let shapes = self.validate()?;
        let a = &self.appearance;
        let conv = |spec: &ConvSpec, cin: usize| {
            spec.kernel * spec.kernel * cin * spec.out_channels + spec.out_channels
        };
        let n = self.hidden_units;
        let mut total = conv(&a.conv1, 1)
            + conv(&a.conv2, a.conv1.out_channels)
            + conv(&a.conv3, a.conv2.out_channels)
            + shapes.flat * a.fc1_width
            + a.fc1_width
            + a.fc1_width * n
            + n
            + n
            + 1;
        if self.variant.has_spatial() {
            let (m, w, c) = shapes.attention;
            total += self
                .spatial
                .mechanism
                .param_count((m, w), c, self.spatial.hidden);
        }
        if self.variant.has_recurrent() {
            total += 2 * (n * n + n * n + n);
        }
        if self.variant.has_temporal() {
            let h = self.temporal_hidden();
            total += h * n + h + h + 1;
        }
        Ok(total)
    }
}
