use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::smoother::smooth_4253h_twice;
use super::{Dataset, Region, SmileKind, VideoSample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Video counts per decade (0-9, 10-19, ..., 70-79) of the replica manifest.
pub const TABLE_BIN_COUNTS: [usize; 8] = [158, 333, 215, 171, 250, 66, 30, 17];

const FACE_LEVEL: f64 = 0.55;
const BACKGROUND_LEVEL: f64 = 0.15;
const FEATURE_LEVEL: f64 = 0.15;
const WRINKLE_DEPTH: f64 = 0.4;

/// Parameters of the synthetic oracle dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub videos_per_subject: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub min_age: u32,
    pub max_age: u32,
    pub frame_size: usize,
    /// Planted wrinkle regions in pixels; `None` uses the standard layout.
    pub regions: Option<Vec<Region>>,
    /// Apex position as a fraction of the video length, drawn uniformly.
    pub apex_min: f64,
    pub apex_max: f64,
    pub noise_sigma: f64,
    /// Peak amplitude of random background blobs.
    pub clutter: f64,
    /// Strength of age-unrelated crease texture, relative to full wrinkle
    /// depth. It covers the face outside the planted regions and, scaled by
    /// `1 − intensity`, the regions themselves, so only the regions at the
    /// apex carry age information.
    pub texture: f64,
    /// Standard deviation of smoothed noise added to the intensity profile.
    pub profile_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_subjects: 100,
            videos_per_subject: 2,
            min_frames: 6,
            max_frames: 8,
            min_age: 8,
            max_age: 76,
            frame_size: 16,
            regions: None,
            apex_min: 0.35,
            apex_max: 0.75,
            noise_sigma: 0.02,
            clutter: 0.3,
            texture: 1.0,
            profile_jitter: 0.0,
            seed: 0,
        }
    }
}

fn scaled_rect(name: &str, size: usize, x: (f64, f64), y: (f64, f64)) -> Region {
    let px = |v: f64| (v * size as f64).round() as usize;
    let (x0, y0) = (px(x.0), px(y.0));
    Region {
        name: name.to_string(),
        x0,
        y0,
        x1: px(x.1).max(x0 + 1),
        y1: px(y.1).max(y0 + 1),
    }
}

impl SyntheticSpec {
    /// Under-eye bands, nasolabial folds and the mouth surround.
    pub fn standard_regions(size: usize) -> Vec<Region> {
        vec![
            scaled_rect("under_eye_left", size, (0.25, 0.44), (0.44, 0.56)),
            scaled_rect("under_eye_right", size, (0.56, 0.75), (0.44, 0.56)),
            scaled_rect("nasolabial_left", size, (0.25, 0.38), (0.56, 0.75)),
            scaled_rect("nasolabial_right", size, (0.62, 0.75), (0.56, 0.75)),
            scaled_rect("mouth", size, (0.38, 0.62), (0.75, 0.88)),
        ]
    }

    pub fn resolved_regions(&self) -> Vec<Region> {
        self.regions
            .clone()
            .unwrap_or_else(|| Self::standard_regions(self.frame_size))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 || self.videos_per_subject == 0 {
            return bad("need at least one subject and one video per subject".into());
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad(format!(
                "invalid frame range [{}, {}]",
                self.min_frames, self.max_frames
            ));
        }
        if self.min_age > self.max_age || self.max_age > 120 {
            return bad(format!(
                "invalid age range [{}, {}]",
                self.min_age, self.max_age
            ));
        }
        if self.frame_size < 4 {
            return bad(format!("frame size {} is too small", self.frame_size));
        }
        if !(0.0 < self.apex_min && self.apex_min <= self.apex_max && self.apex_max <= 1.0) {
            return bad(format!(
                "apex range [{}, {}] must lie in (0, 1]",
                self.apex_min, self.apex_max
            ));
        }
        if self.noise_sigma < 0.0
            || self.clutter < 0.0
            || self.texture < 0.0
            || self.profile_jitter < 0.0
        {
            return bad("noise, clutter, texture and jitter must be nonnegative".into());
        }
        for r in self.resolved_regions() {
            if r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > self.frame_size || r.y1 > self.frame_size {
                return Err(Error::invalid(format!(
                    "region {} [{}, {}) x [{}, {}) lies outside the {}x{} frame",
                    r.name, r.x0, r.x1, r.y0, r.y1, self.frame_size, self.frame_size
                )));
            }
        }
        Ok(())
    }
}

/// Age dependence of wrinkle contrast: rises linearly from 0.1 at 8 years
/// to 1.0 at 76 years, clamped outside.
pub fn wrinkle_strength(age: f64) -> f64 {
    0.1 + 0.9 * ((age - 8.0) / 68.0).clamp(0.0, 1.0)
}

/// Raised-cosine smile intensity: 0 at frame 0, 1 at `apex`, back to 0 at
/// the last frame (unless the apex is the last frame).
pub fn intensity_profile(frames: usize, apex: usize) -> Vec<f64> {
    (0..frames)
        .map(|t| {
            if frames == 1 || t == apex {
                1.0
            } else if t < apex {
                0.5 * (1.0 - (PI * t as f64 / apex as f64).cos())
            } else {
                let tail = (frames - 1 - apex) as f64;
                0.5 * (1.0 + (PI * (t - apex) as f64 / tail).cos())
            }
        })
        .collect()
}

struct Plan {
    id: u64,
    subject_id: u64,
    age: u32,
    kind: SmileKind,
}

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    amplitude: f64,
}

/// Per-frame rendering inputs.
struct FrameStyle<'a> {
    intensity: f64,
    age: f64,
    /// Neutral crease level inside the regions (per video).
    skin: f64,
    /// Crease level outside the regions (per frame).
    texture: f64,
    blobs: &'a [Blob],
}

fn render_frame(size: usize, regions: &[Region], style: &FrameStyle) -> Vec<f64> {
    let s = size as f64;
    let mut img = vec![BACKGROUND_LEVEL; size * size];
    let intensity = style.intensity;
    let inside =
        WRINKLE_DEPTH * (intensity * wrinkle_strength(style.age) + (1.0 - intensity) * style.skin);
    let outside = WRINKLE_DEPTH * style.texture;
    let mouth_half = 0.14 * s;
    let mouth_y = 0.78 * s;
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
            let face = ((fx - 0.5) / 0.36).powi(2) + ((fy - 0.55) / 0.42).powi(2) <= 1.0;
            let v = &mut img[y * size + x];
            if !face {
                for b in style.blobs {
                    let d2 = (fx - b.cx).powi(2) + (fy - b.cy).powi(2);
                    *v += b.amplitude * (-d2 / (2.0 * b.radius * b.radius)).exp();
                }
                continue;
            }
            // alternating rows of deep and shallow creases
            *v = FACE_LEVEL;
            match regions.iter().find(|r| r.contains(x, y)) {
                Some(r) => *v -= inside * if (y - r.y0) % 2 == 0 { 1.0 } else { 0.5 },
                None => *v -= outside * if y % 2 == 0 { 1.0 } else { 0.5 },
            }
            for ex in [0.35, 0.65] {
                if ((fx - ex) / 0.07).powi(2) + ((fy - 0.36) / 0.045).powi(2) <= 1.0 {
                    *v = FEATURE_LEVEL;
                }
            }
            let dx = (x as f64 + 0.5 - 0.5 * s) / mouth_half;
            if dx.abs() <= 1.0 {
                let curve = mouth_y - intensity * 0.08 * s * dx * dx;
                if (y as f64 + 0.5 - curve).abs() <= 0.5 {
                    *v = FEATURE_LEVEL;
                }
            }
        }
    }
    img
}

fn render_video(spec: &SyntheticSpec, regions: &[Region], plan: &Plan) -> Result<VideoSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(plan.id + 1);
    let frames = rng.random_range(spec.min_frames..=spec.max_frames);
    let frac = rng.random_range(spec.apex_min..=spec.apex_max);
    let apex = if frames == 1 {
        0
    } else {
        ((frac * (frames - 1) as f64).round() as usize).clamp(1, frames - 1)
    };
    let mut profile = intensity_profile(frames, apex);
    if spec.profile_jitter > 0.0 {
        let normal = Normal::new(0.0, spec.profile_jitter).expect("finite sigma");
        let noisy: Vec<f64> = profile
            .iter()
            .map(|p| p + normal.sample(&mut rng))
            .collect();
        profile = smooth_4253h_twice(&noisy)?
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect();
    }
    let apex_frame = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(t, _)| t);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let size = spec.frame_size;
    let age = f64::from(plan.age);
    let skin = spec.texture * rng.random_range(0.0..1.0);
    let mut out = Vec::with_capacity(frames);
    for &intensity in &profile {
        let blobs: Vec<Blob> = (0..2)
            .map(|_| Blob {
                cx: rng.random_range(0.0..1.0),
                cy: rng.random_range(0.0..1.0),
                radius: rng.random_range(0.05..0.15),
                amplitude: rng.random_range(-spec.clutter..=spec.clutter),
            })
            .collect();
        let style = FrameStyle {
            intensity,
            age,
            skin,
            texture: spec.texture * rng.random_range(0.0..1.0),
            blobs: &blobs,
        };
        let mut img = render_frame(size, regions, &style);
        for v in &mut img {
            if spec.noise_sigma > 0.0 {
                *v += noise.sample(&mut rng);
            }
            // stored as f32 on disk
            *v = f64::from(v.clamp(0.0, 1.0) as f32);
        }
        out.push(Tensor::new([size, size, 1], img)?);
    }
    Ok(VideoSample {
        id: plan.id,
        subject_id: plan.subject_id,
        age,
        smile_kind: plan.kind,
        frames: out,
        apex_frame,
    })
}

fn render_all(spec: &SyntheticSpec, plans: &[Plan]) -> Result<Dataset> {
    spec.validate()?;
    let regions = spec.resolved_regions();
    let videos = plans
        .par_iter()
        .map(|p| render_video(spec, &regions, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        frame_height: spec.frame_size,
        frame_width: spec.frame_size,
        regions,
        videos,
    })
}

/// Renders `n_subjects × videos_per_subject` videos. Each subject has one
/// integer age drawn uniformly from the age range.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut plans = Vec::with_capacity(spec.n_subjects * spec.videos_per_subject);
    for subject in 0..spec.n_subjects as u64 {
        let age = rng.random_range(spec.min_age..=spec.max_age);
        for _ in 0..spec.videos_per_subject {
            plans.push(Plan {
                id: plans.len() as u64,
                subject_id: subject,
                age,
                kind: SmileKind::Synthetic,
            });
        }
    }
    render_all(spec, &plans)
}

/// A 1240-video, 400-subject dataset whose per-decade video counts equal
/// [`TABLE_BIN_COUNTS`], with 597 spontaneous and 643 posed smiles. Frame
/// rendering follows `spec`; its subject and video counts are ignored.
pub fn generate_replica(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // subjects with four videos per bin; the rest have three
    let fours = [2, 33, 2, 0, 1, 0, 0, 2];
    let mut plans = Vec::with_capacity(1240);
    let mut subject = 0u64;
    for (bin, (&count, &four)) in TABLE_BIN_COUNTS.iter().zip(&fours).enumerate() {
        let threes = (count - 4 * four) / 3;
        let lo = (10 * bin as u32).max(8);
        let hi = (10 * bin as u32 + 9).min(76);
        for s in 0..threes + four {
            let age = rng.random_range(lo..=hi);
            for _ in 0..if s < four { 4 } else { 3 } {
                plans.push(Plan {
                    id: plans.len() as u64,
                    subject_id: subject,
                    age,
                    kind: SmileKind::Posed,
                });
            }
            subject += 1;
        }
    }
    let mut kinds: Vec<SmileKind> = std::iter::repeat_n(SmileKind::Spontaneous, 597)
        .chain(std::iter::repeat_n(SmileKind::Posed, 643))
        .collect();
    kinds.shuffle(&mut rng);
    for (p, k) in plans.iter_mut().zip(kinds) {
        p.kind = k;
    }
    debug_assert_eq!(plans.len(), 1240);
    debug_assert_eq!(subject, 400);
    render_all(spec, &plans)
}
