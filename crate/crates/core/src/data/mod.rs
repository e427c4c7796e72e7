//! Video samples, the synthetic oracle generator, the 4253H-twice smoother,
//! the on-disk dataset format and subject-disjoint fold planning.

mod folds;
mod format;
mod smoother;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use folds::{make_folds, FoldPlan, FoldRoles, FoldSplit};
pub use format::{load_dataset, save_dataset, FORMAT_VERSION, VIDEO_MAGIC};
pub use smoother::{
    hanning, running_median, running_median_even, smooth_4253h, smooth_4253h_twice,
};
pub use synthetic::{
    generate_replica, generate_synthetic, intensity_profile, wrinkle_strength, SyntheticSpec,
    TABLE_BIN_COUNTS,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmileKind {
    Spontaneous,
    Posed,
    Synthetic,
}

impl SmileKind {
    pub fn name(self) -> &'static str {
        match self {
            SmileKind::Spontaneous => "spontaneous",
            SmileKind::Posed => "posed",
            SmileKind::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for SmileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SmileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spontaneous" => Ok(SmileKind::Spontaneous),
            "posed" => Ok(SmileKind::Posed),
            "synthetic" => Ok(SmileKind::Synthetic),
            other => Err(Error::invalid(format!("unknown smile kind {other:?}"))),
        }
    }
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// One smile video: `T` grayscale frames `[H, W, 1]` in `[0, 1]` and an age
/// label in years.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub id: u64,
    pub subject_id: u64,
    pub age: f64,
    pub smile_kind: SmileKind,
    pub frames: Vec<Tensor>,
    /// Frame of maximal expression intensity, when known.
    pub apex_frame: Option<usize>,
}

impl VideoSample {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.frames.first() else {
            return Err(Error::invalid(format!("video {} has no frames", self.id)));
        };
        if !(0.0..=120.0).contains(&self.age) {
            return Err(Error::invalid(format!(
                "video {}: age {} outside [0, 120]",
                self.id, self.age
            )));
        }
        let shape = first.shape();
        if shape.len() != 3 || shape[2] != 1 {
            return Err(Error::shape(format!(
                "video {}: frame shape {shape:?}, expected [H, W, 1]",
                self.id
            )));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.shape() != shape {
                return Err(Error::shape(format!(
                    "video {}: frame {t} has shape {:?}",
                    self.id,
                    f.shape()
                )));
            }
            if f.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "video {}: frame {t} has pixels outside [0, 1]",
                    self.id
                )));
            }
        }
        if let Some(a) = self.apex_frame {
            if a >= self.frames.len() {
                return Err(Error::invalid(format!(
                    "video {}: apex frame {a} out of range",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// A collection of videos sharing one frame geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub frame_height: usize,
    pub frame_width: usize,
    /// Planted salience regions (synthetic data only).
    pub regions: Vec<Region>,
    pub videos: Vec<VideoSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<u64> {
        self.videos
            .iter()
            .map(|v| v.subject_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn ages(&self) -> Vec<f64> {
        self.videos.iter().map(|v| v.age).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&VideoSample> {
        indices.iter().map(|&i| &self.videos[i]).collect()
    }

    pub fn refs(&self) -> Vec<&VideoSample> {
        self.videos.iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.regions {
            if r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > self.frame_width || r.y1 > self.frame_height {
                return Err(Error::invalid(format!(
                    "region {} [{}, {}) x [{}, {}) outside the {}x{} frame",
                    r.name, r.x0, r.x1, r.y0, r.y1, self.frame_width, self.frame_height
                )));
            }
        }
        for v in &self.videos {
            v.validate()?;
            if v.frames[0].shape()[..2] != [self.frame_height, self.frame_width] {
                return Err(Error::shape(format!(
                    "video {}: frames are {:?}, dataset is {}x{}",
                    v.id,
                    v.frames[0].shape(),
                    self.frame_height,
                    self.frame_width
                )));
            }
        }
        Ok(())
    }

    /// Boolean mask (row-major `H×W`) of pixels inside any planted region.
    pub fn region_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.frame_height * self.frame_width];
        for y in 0..self.frame_height {
            for x in 0..self.frame_width {
                mask[y * self.frame_width + x] = self.regions.iter().any(|r| r.contains(x, y));
            }
        }
        mask
    }
}
