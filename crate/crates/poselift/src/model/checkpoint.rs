//! Checkpoint persistence.
//!
//! Single little-endian binary file:
//!
//! ```text
//! magic   b"PLFT"
//! version u32 (currently 1)
//! header  input_2d, output_3d, hidden, train_seq_len, flags  (all u32)
//!         flags: bit 0 residual, bit 1 layer_norm, bit 2 input_proj
//! params  u64 count, then count f64 values in ModelParams::segments order
//! adam    u64 step_count, then count f64 first moments, count f64 second
//! trailer u64 byte length, then JSON {norm_2d, norm_3d, skeleton}
//! ```
//!
//! Loading is all-or-nothing: any inconsistency (magic, version, sizes,
//! truncation, trailing bytes) fails before any state is returned.

use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams};
use crate::numeric::AdamState;
use crate::pipeline::NormStats;
use crate::skeleton::SkeletonSpec;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PLFT";
const VERSION: u32 = 1;

/// A complete training snapshot: parameters, optimizer moments, the frozen
/// normalization statistics, and the skeleton they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    pub stats_2d: NormStats,
    pub stats_3d: NormStats,
    pub skeleton: SkeletonSpec,
}

impl Checkpoint {
    /// Errors when the checkpoint was trained for a different skeleton.
    pub fn validate_skeleton(&self, spec: &SkeletonSpec) -> Result<()> {
        if self.skeleton != *spec {
            return Err(Error::Checkpoint(format!(
                "checkpoint skeleton ({} joints) does not match requested skeleton ({} joints)",
                self.skeleton.n_joints(),
                spec.n_joints()
            )));
        }
        Ok(())
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Trailer {
    norm_2d: NormStats,
    norm_3d: NormStats,
    skeleton: serde_json::Value,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let dims = &ckpt.params.dims;
    let count = ModelParams::param_count(dims);
    if ckpt.adam.m.len() != count || ckpt.adam.v.len() != count {
        return Err(Error::Checkpoint(format!(
            "optimizer moments ({}, {}) do not match parameter count {count}",
            ckpt.adam.m.len(),
            ckpt.adam.v.len()
        )));
    }

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        dims.input_2d as u32,
        dims.output_3d as u32,
        dims.hidden as u32,
        dims.train_seq_len as u32,
        flags_of(dims),
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(count as u64).to_le_bytes());
    for v in ckpt.params.flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&ckpt.adam.step_count.to_le_bytes());
    for v in ckpt.adam.m.iter().chain(&ckpt.adam.v) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let trailer = Trailer {
        norm_2d: ckpt.stats_2d.clone(),
        norm_3d: ckpt.stats_3d.clone(),
        skeleton: serde_json::from_str(&ckpt.skeleton.to_json())?,
    };
    let trailer_bytes = serde_json::to_vec(&trailer)?;
    buf.extend_from_slice(&(trailer_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&trailer_bytes);

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    file.flush()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file while reading {what} (need {n} bytes at offset {})",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn flags_of(dims: &ModelDims) -> u32 {
    (dims.residual as u32) | ((dims.layer_norm as u32) << 1) | ((dims.input_proj as u32) << 2)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { buf: &bytes, pos: 0 };

    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let input_2d = r.u32("input_2d")? as usize;
    let output_3d = r.u32("output_3d")? as usize;
    let hidden = r.u32("hidden")? as usize;
    let train_seq_len = r.u32("train_seq_len")? as usize;
    let flags = r.u32("flags")?;
    let dims = ModelDims {
        input_2d,
        output_3d,
        hidden,
        train_seq_len,
        residual: flags & 1 != 0,
        layer_norm: flags & 2 != 0,
        input_proj: flags & 4 != 0,
    };
    dims.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let count = r.u64("param count")? as usize;
    if count != ModelParams::param_count(&dims) {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match dims (expected {})",
            ModelParams::param_count(&dims)
        )));
    }
    let flat = r.f64_vec(count, "parameters")?;
    let step_count = r.u64("optimizer step count")?;
    let m = r.f64_vec(count, "first moments")?;
    let v = r.f64_vec(count, "second moments")?;
    let trailer_len = r.u64("trailer length")? as usize;
    let trailer_bytes = r.take(trailer_len, "trailer")?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} unexpected trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let trailer: Trailer = serde_json::from_slice(trailer_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad trailer: {e}")))?;
    let skeleton = SkeletonSpec::from_json(&trailer.skeleton.to_string())?;

    // Cross-check the header dims against the skeleton.
    let expect_in = (skeleton.n_joints() - 1) * 2;
    let expect_out = (skeleton.n_joints() - 1) * 3;
    if input_2d != expect_in || output_3d != expect_out {
        return Err(Error::Checkpoint(format!(
            "dims {input_2d}/{output_3d} do not match the {}-joint skeleton (expected {expect_in}/{expect_out})",
            skeleton.n_joints()
        )));
    }
    if trailer.norm_2d.dim() != input_2d || trailer.norm_3d.dim() != output_3d {
        return Err(Error::Checkpoint(format!(
            "normalization stats dims {}/{} do not match model dims {input_2d}/{output_3d}",
            trailer.norm_2d.dim(),
            trailer.norm_3d.dim()
        )));
    }

    let mut params = ModelParams {
        dims,
        encoder: crate::model::CellParams::zeros(dims.input_2d, dims.hidden),
        decoder: crate::model::CellParams::zeros(dims.output_3d, dims.hidden),
        dec_input_proj: dims
            .input_proj
            .then(|| crate::numeric::Matrix::zeros(dims.output_3d, dims.output_3d)),
        w_out: crate::numeric::Matrix::zeros(dims.hidden, dims.output_3d),
        b_out: vec![0.0; dims.output_3d],
    };
    params.assign_from_flat(&flat)?;

    let mut adam = AdamState::new(count);
    adam.step_count = step_count;
    adam.m = m;
    adam.v = v;

    Ok(Checkpoint {
        params,
        adam,
        stats_2d: trailer.norm_2d,
        stats_3d: trailer.norm_3d,
        skeleton,
    })
}
