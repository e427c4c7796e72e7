use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionMap, SpatialAttentionParams, SpatialMechanism};
use crate::data::{make_folds, Dataset, VideoSample};
use crate::error::{Error, Result};
use crate::network::{ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::training::{fit, TrainConfig};

/// Writes one PGM per frame and, for the full model, one temporal CSV.
pub fn export_attention(
    params: &ModelParams,
    video: &VideoSample,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pred = params.predict(&video.frames)?;
    let mut written = Vec::new();
    for (t, map) in pred.spatial.iter().enumerate() {
        let path = out_dir.join(format!("video{:06}_frame{t:03}.pgm", video.id));
        map.write(&path)?;
        written.push(path);
    }
    if let Some(map) = &pred.temporal {
        let path = out_dir.join(format!("video{:06}_temporal.csv", video.id));
        map.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Planted-region statistics of the learned attention on a set of videos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalienceSummary {
    pub videos: usize,
    /// Mean spatial weight over pixels inside the planted regions.
    pub inside_mean: f64,
    pub outside_mean: f64,
    pub ratio: f64,
    /// Fraction of videos whose apex-frame temporal weight beats frame 0.
    pub apex_over_first: Option<f64>,
}

/// Spatial weights are spread back onto pixels: grid cell `(i, j)` covers
/// rows `⌊i·H/M⌋..⌊(i+1)·H/M⌋` and the matching columns.
fn pixel_means(
    map: &Tensor,
    mask: &[bool],
    height: usize,
    width: usize,
) -> (f64, usize, f64, usize) {
    let (m, n) = (map.shape()[0], map.shape()[1]);
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
    for y in 0..height {
        let i = (y * m / height).min(m - 1);
        for x in 0..width {
            let j = (x * n / width).min(n - 1);
            let a = map.data()[i * n + j];
            if mask[y * width + x] {
                inside += a;
                n_in += 1;
            } else {
                outside += a;
                n_out += 1;
            }
        }
    }
    (inside, n_in, outside, n_out)
}

pub fn salience(
    params: &ModelParams,
    dataset: &Dataset,
    videos: &[&VideoSample],
) -> Result<SalienceSummary> {
    if dataset.regions.is_empty() {
        return Err(Error::invalid("dataset has no planted regions"));
    }
    if videos.is_empty() {
        return Err(Error::invalid("salience needs at least one video"));
    }
    let mask = dataset.region_mask();
    let per_video = videos
        .par_iter()
        .map(|v| {
            let pred = params.predict(&v.frames)?;
            let mut sums = (0.0, 0usize, 0.0, 0usize);
            for map in &pred.spatial {
                let s = pixel_means(
                    &map.weights,
                    &mask,
                    dataset.frame_height,
                    dataset.frame_width,
                );
                sums = (sums.0 + s.0, sums.1 + s.1, sums.2 + s.2, sums.3 + s.3);
            }
            let apex_wins = match (&pred.temporal, v.apex_frame) {
                (Some(o), Some(a)) => Some(o.weights.data()[a] > o.weights.data()[0]),
                _ => None,
            };
            Ok((sums, apex_wins))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0, 0.0, 0);
    let mut wins = Vec::new();
    for ((i, ni, o, no), w) in per_video {
        inside += i;
        n_in += ni;
        outside += o;
        n_out += no;
        wins.extend(w);
    }
    if n_in == 0 || n_out == 0 {
        return Err(Error::invalid("model has no spatial attention gate"));
    }
    let (inside_mean, outside_mean) = (inside / n_in as f64, outside / n_out as f64);
    Ok(SalienceSummary {
        videos: videos.len(),
        inside_mean,
        outside_mean,
        ratio: inside_mean / outside_mean,
        apex_over_first: (!wins.is_empty())
            .then(|| wins.iter().filter(|&&w| w).count() as f64 / wins.len() as f64),
    })
}

/// Checks whether permuting the spatial positions of a random feature map
/// permutes the attention weights identically (within 1e-12).
pub fn permutation_equivariant(params: &SpatialAttentionParams, seed: u64) -> Result<bool> {
    let (m, n) = params.grid();
    let c = params.channels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Tensor::uniform([m, n, c], 1.0, &mut rng);
    let mut perm: Vec<usize> = (0..m * n).collect();
    perm.shuffle(&mut rng);
    let mut shuffled = vec![0.0; m * n * c];
    for (p, &q) in perm.iter().enumerate() {
        shuffled[q * c..(q + 1) * c].copy_from_slice(&features.data()[p * c..(p + 1) * c]);
    }
    let (_, a) = params.forward(&features)?;
    let (_, b) = params.forward(&Tensor::new([m, n, c], shuffled)?)?;
    Ok(perm
        .iter()
        .enumerate()
        .all(|(p, &q)| (a.weights.data()[p] - b.weights.data()[q]).abs() <= 1e-12))
}

/// One mechanism × insertion-layer configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MechanismRow {
    pub mechanism: SpatialMechanism,
    pub layer: usize,
    pub grid: (usize, usize),
    pub attention_params: usize,
    pub val_mae: Option<f64>,
    pub permutation_equivariant: bool,
    pub error: Option<String>,
    /// Spatial maps of the first validation video.
    #[serde(skip)]
    pub maps: Vec<AttentionMap>,
}

/// Trains every spatial mechanism at every insertion layer (12 runs) on
/// the same subject-disjoint split and reports validation MAE.
pub fn mechanism_compare(
    dataset: &Dataset,
    model: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<Vec<MechanismRow>> {
    let plan = make_folds(dataset, 5, seed)?;
    let (val_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| plan.fold_of(dataset.videos[i].subject_id) == Some(0));
    let train_set = dataset.select(&train_idx);
    let val_set = dataset.select(&val_idx);
    let configs: Vec<(SpatialMechanism, usize)> = SpatialMechanism::ALL
        .into_iter()
        .flat_map(|m| (1..=3).map(move |l| (m, l)))
        .collect();
    configs
        .par_iter()
        .map(|&(mechanism, layer)| {
            let mut cfg = model.clone();
            cfg.spatial.mechanism = mechanism;
            cfg.appearance.attention_layer = layer;
            cfg.appearance.attention_after_pool = false;
            let (m, n, c) = cfg.validate()?.attention;
            let outcome = fit(
                &cfg,
                &train_set,
                &val_set,
                &TrainConfig {
                    seed,
                    ..train.clone()
                },
            );
            let mut row = MechanismRow {
                mechanism,
                layer,
                grid: (m, n),
                attention_params: mechanism.param_count((m, n), c, cfg.spatial.hidden),
                val_mae: None,
                permutation_equivariant: false,
                error: None,
                maps: Vec::new(),
            };
            match outcome {
                Ok(r) => {
                    row.val_mae = r.best_val_mae;
                    if let Some(sp) = r.params.spatial_attention() {
                        row.permutation_equivariant = permutation_equivariant(&sp, seed)?;
                    }
                    if let Some(v) = val_set.first() {
                        row.maps = r.params.predict(&v.frames)?.spatial;
                    }
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            Ok(row)
        })
        .collect()
}
