use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Region, SmileKind, VideoSample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const VIDEO_MAGIC: [u8; 4] = *b"VIDF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4;

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    frame_height: usize,
    frame_width: usize,
    channels: usize,
    #[serde(default)]
    regions: Vec<Region>,
    videos: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: u64,
    subject_id: u64,
    age: f64,
    smile_kind: SmileKind,
    frames: usize,
    apex_frame: Option<usize>,
    file: String,
}

fn video_file(id: u64) -> String {
    format!("videos/{id:06}.vid")
}

fn encode_video(v: &VideoSample) -> Vec<u8> {
    let shape = v.frames[0].shape();
    let pixels: usize = v.frames.iter().map(Tensor::len).sum();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * pixels + 4);
    buf.extend_from_slice(&VIDEO_MAGIC);
    for n in [
        FORMAT_VERSION as usize,
        v.frames.len(),
        shape[0],
        shape[1],
        shape[2],
    ] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for f in &v.frames {
        for &x in f.data() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn decode_video(
    index: usize,
    entry: &ManifestEntry,
    path: &Path,
    bytes: &[u8],
) -> Result<Vec<Tensor>> {
    let fail = |msg: String| Error::format(path, format!("video {index} (id {}): {msg}", entry.id));
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if bytes[..4] != VIDEO_MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let [t, h, w, c] = [8, 12, 16, 20].map(|o| u32_at(bytes, o) as usize);
    if t != entry.frames {
        return Err(fail(format!(
            "header has {t} frames, manifest {}",
            entry.frames
        )));
    }
    let pixels = t * h * w * c;
    let expected = HEADER_LEN + 4 * pixels + 4;
    if bytes.len() < expected {
        return Err(fail(format!(
            "truncated: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(fail(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let body = &bytes[..expected - 4];
    let stored = u32_at(bytes, expected - 4);
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(fail(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let values: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    values
        .chunks_exact(h * w * c)
        .map(|f| Tensor::new([h, w, c], f.to_vec()))
        .collect()
}

/// Writes `manifest.json` and one `videos/<id>.vid` file per video.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    let videos_dir = dir.join("videos");
    fs::create_dir_all(&videos_dir).map_err(|e| Error::io(&videos_dir, e))?;
    let manifest = Manifest {
        version: FORMAT_VERSION,
        frame_height: dataset.frame_height,
        frame_width: dataset.frame_width,
        channels: 1,
        regions: dataset.regions.clone(),
        videos: dataset
            .videos
            .iter()
            .map(|v| ManifestEntry {
                id: v.id,
                subject_id: v.subject_id,
                age: v.age,
                smile_kind: v.smile_kind,
                frames: v.frames.len(),
                apex_frame: v.apex_frame,
                file: video_file(v.id),
            })
            .collect(),
    };
    dataset.videos.par_iter().try_for_each(|v| {
        let path = dir.join(video_file(v.id));
        fs::write(&path, encode_video(v)).map_err(|e| Error::io(&path, e))
    })?;
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Reads a dataset written by [`save_dataset`], verifying every checksum.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(&path, format!("invalid manifest: {e}")))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    if manifest.channels != 1 {
        return Err(Error::format(
            &path,
            format!("expected 1 channel, found {}", manifest.channels),
        ));
    }
    let videos = manifest
        .videos
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let vpath = dir.join(&entry.file);
            let bytes = fs::read(&vpath).map_err(|e| Error::io(&vpath, e))?;
            let frames = decode_video(index, entry, &vpath, &bytes)?;
            Ok(VideoSample {
                id: entry.id,
                subject_id: entry.subject_id,
                age: entry.age,
                smile_kind: entry.smile_kind,
                frames,
                apex_frame: entry.apex_frame,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        frame_height: manifest.frame_height,
        frame_width: manifest.frame_width,
        regions: manifest.regions,
        videos,
    };
    dataset
        .validate()
        .map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(dataset)
}
