//! Binary checkpoint format for [`ModelParams`].
//!
//! All integers little-endian:
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 8     | magic `VIDAGEM\0`                              |
//! | 4     | format version (`u32`, currently 1)            |
//! | 8     | initialization seed (`u64`)                    |
//! | 4     | config length `L` (`u32`)                      |
//! | L     | UTF-8 JSON of the [`ModelConfig`]              |
//! | 8     | value count `V` (`u64`)                        |
//! | 8·V   | `f64` values of every tensor in declared order |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::{layout, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"VIDAGEM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> std::io::Result<()> {
    let config = serde_json::to_vec(params.config()).map_err(std::io::Error::other)?;
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&params.seed().to_le_bytes())?;
    out.write_all(&(config.len() as u32).to_le_bytes())?;
    out.write_all(&config)?;
    out.write_all(&(params.param_count() as u64).to_le_bytes())?;
    for t in params.tensors() {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn read_array<const N: usize, R: Read>(
    input: &mut R,
    what: &str,
) -> std::result::Result<[u8; N], String> {
    let mut buf = [0u8; N];
    input
        .read_exact(&mut buf)
        .map_err(|e| format!("reading {what}: {e}"))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> std::result::Result<ModelParams, String> {
    let magic: [u8; 8] = read_array(&mut input, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err("not a model checkpoint (bad magic)".into());
    }
    let version = u32::from_le_bytes(read_array(&mut input, "version")?);
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let seed = u64::from_le_bytes(read_array(&mut input, "seed")?);
    let len = u32::from_le_bytes(read_array(&mut input, "config length")?) as usize;
    let mut config = vec![0u8; len];
    input
        .read_exact(&mut config)
        .map_err(|e| format!("reading config: {e}"))?;
    let config: ModelConfig =
        serde_json::from_slice(&config).map_err(|e| format!("config JSON: {e}"))?;
    let (infos, _) = layout(&config).map_err(|e| e.to_string())?;
    let count = u64::from_le_bytes(read_array(&mut input, "value count")?) as usize;
    let expected: usize = infos
        .iter()
        .map(|i| i.shape.iter().product::<usize>())
        .sum();
    if count != expected {
        return Err(format!(
            "checkpoint holds {count} values, config needs {expected}"
        ));
    }
    let mut tensors = Vec::with_capacity(infos.len());
    for info in &infos {
        let n: usize = info.shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        input
            .read_exact(&mut bytes)
            .map_err(|e| format!("reading {:?}.{}: {e}", info.group, info.name))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(info.shape.clone(), data).map_err(|e| e.to_string())?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after parameters".into());
    }
    ModelParams::from_tensors(config, seed, tensors).map_err(|e| e.to_string())
}

impl ModelParams {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_checkpoint(self, BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(BufReader::new(file)).map_err(|msg| Error::format(path, msg))
    }
}
