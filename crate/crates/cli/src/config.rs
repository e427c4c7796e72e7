use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use vidage::data::SyntheticSpec;
use vidage::training::GridSpace;
use vidage::{ModelConfig, SpatialMechanism, TrainConfig, Variant, WeightInit};

/// JSON experiment file. Every field is optional; command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Complete architecture; replaces the scale-derived default.
    pub model: Option<ModelConfig>,
    pub scale: Option<f64>,
    pub input_size: Option<usize>,
    pub variant: Option<Variant>,
    pub mechanism: Option<SpatialMechanism>,
    pub attention_layer: Option<usize>,
    pub attention_after_pool: Option<bool>,
    pub weight_init: Option<WeightInit>,
    pub train: TrainConfig,
    pub synthetic: SyntheticSpec,
    /// Generate the 1240-video replica manifest instead of `synthetic`.
    pub replica: bool,
    pub grid: Option<GridSpace>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub max_threshold: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// JSON experiment configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Width multiplier applied to the full-size architecture
    #[arg(long)]
    pub scale: Option<f64>,
    /// cnn_only, cnn_rnn, cnn_rnn_spatial or full
    #[arg(long)]
    pub variant: Option<Variant>,
    /// spatially_agnostic, fully_spatially_indexed, mediate_spatially_indexed or spatially_indexed
    #[arg(long)]
    pub mechanism: Option<SpatialMechanism>,
    /// Convolutional layer the spatial attention follows
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub attn_layer: Option<u8>,
    /// Initializer for the ReLU layers: glorot or he
    #[arg(long)]
    pub init: Option<WeightInit>,
    /// Model checkpoint
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of cross-validation folds
    #[arg(long)]
    pub folds: Option<usize>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Fully resolved settings for one command.
#[derive(Debug)]
pub struct Settings {
    pub file: FileConfig,
    pub seed: u64,
    pub folds: usize,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl CommonArgs {
    pub fn settings(&self) -> Result<Settings> {
        let file = FileConfig::load(self.config.as_deref())?;
        let seed = self.seed.or(file.seed).unwrap_or(0);
        let folds = self.folds.or(file.folds).unwrap_or(10);
        let mut train = file.train.clone();
        if self.seed.is_some() || file.seed.is_some() {
            train.seed = seed;
        }
        if let Some(e) = self.epochs {
            train.epochs = e;
        }
        train.validate()?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        Ok(Settings {
            file,
            seed,
            folds,
            train,
            out,
        })
    }

    pub fn dataset(&self) -> Result<&Path> {
        match &self.dataset {
            Some(d) => Ok(d),
            None => bail!("--dataset is required"),
        }
    }

    pub fn checkpoint(&self) -> Result<&Path> {
        match &self.checkpoint {
            Some(c) => Ok(c),
            None => bail!("--checkpoint is required"),
        }
    }

    /// Architecture for frames of `input_size` pixels.
    pub fn model(&self, file: &FileConfig, input_size: usize) -> Result<ModelConfig> {
        let mut cfg = match &file.model {
            Some(m) => m.clone(),
            None => ModelConfig::scaled(self.scale.or(file.scale).unwrap_or(1.0), input_size),
        };
        if let Some(s) = self.scale.filter(|_| file.model.is_some()) {
            cfg.rescale(s);
        }
        if cfg.appearance.input_size != input_size {
            bail!(
                "model expects {0}x{0} frames but the data has {input_size}x{input_size}",
                cfg.appearance.input_size
            );
        }
        if let Some(v) = self.variant.or(file.variant) {
            cfg.variant = v;
        }
        if let Some(m) = self.mechanism.or(file.mechanism) {
            cfg.spatial.mechanism = m;
        }
        if let Some(l) = self.attn_layer.map(usize::from).or(file.attention_layer) {
            cfg.appearance.attention_layer = l;
        }
        if let Some(p) = file.attention_after_pool {
            cfg.appearance.attention_after_pool = p;
        }
        if let Some(i) = self.init.or(file.weight_init) {
            cfg.weight_init = i;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
