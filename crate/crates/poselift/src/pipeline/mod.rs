//! Data pipeline: pose-file ingestion, camera-frame transformation,
//! root-centering, normalization, sliding windows, batching, noise
//! injection, and the synthetic generator.

pub mod camera;
pub mod io;
pub mod noise;
pub mod synth;
pub mod windows;

pub use camera::{project_pinhole, world_to_camera, CameraExtrinsics};
pub use io::{ingest, write_pose_file, PoseSequence};
pub use noise::add_gaussian_noise;
pub use synth::{bone_edges, default_camera, synth_generate, SynthConfig};
pub use windows::{
    assemble_batch, assemble_reversed_inputs, make_windows, BatchMeta, SequenceBatch, Window,
};

use crate::error::{Error, Result};
use crate::skeleton::{root_center_frame, SkeletonSpec};
use serde::{Deserialize, Serialize};

/// Standard-deviation floor for constant columns.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation, fit on the training split and
/// frozen for validation/test use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::dim_mismatch("NormStats::new", mean.len(), std.len()));
        }
        if std.iter().any(|&s| s < STD_FLOOR) {
            return Err(Error::InvalidArgument(format!(
                "standard deviations must be >= {STD_FLOOR}"
            )));
        }
        Ok(NormStats { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::dim_mismatch("normalize", self.dim(), v.len()));
        }
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn denormalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::dim_mismatch("denormalize", self.dim(), v.len()));
        }
        Ok(v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect())
    }
}

/// Two-pass per-dimension population mean and standard deviation, with the
/// standard deviation floored at 1e-8 so constant columns normalize to zero.
pub fn fit_norm(rows: &[&[f64]]) -> Result<NormStats> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("fit_norm".into()));
    }
    let dim = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::dim_mismatch(format!("fit_norm row {i}"), dim, r.len()));
        }
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(*r) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(*r).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    Ok(NormStats { mean, std })
}

/// A sequence after camera transformation and root-centering: 2D frames of
/// dimension `(J-1)*2` (pixels), optional 3D frames of `(J-1)*3`
/// (camera-frame millimeters).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequence {
    pub subject: String,
    pub action: String,
    pub camera: String,
    pub frames_2d: Vec<Vec<f64>>,
    pub frames_3d: Option<Vec<Vec<f64>>>,
}

impl PreparedSequence {
    pub fn len(&self) -> usize {
        self.frames_2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames_2d.is_empty()
    }
}

/// Optional pixel-space Gaussian corruption applied during preparation.
#[derive(Debug, Clone, Copy)]
pub struct NoiseParams {
    pub sigma: f64,
    pub seed: u64,
}

/// Turns raw pose sequences into model-ready frames: applies the rigid
/// world-to-camera transform when extrinsics are present, optionally
/// injects pixel noise into the raw 2D detections, then root-centers both
/// modalities (the root joint is removed, never predicted).
pub fn prepare_sequences(
    sequences: &[PoseSequence],
    spec: &SkeletonSpec,
    noise: Option<NoiseParams>,
) -> Result<Vec<PreparedSequence>> {
    let sequences = match noise {
        Some(p) => std::borrow::Cow::Owned(add_gaussian_noise(sequences, p.sigma, p.seed)?),
        None => std::borrow::Cow::Borrowed(sequences),
    };
    let mut out = Vec::with_capacity(sequences.len());
    for seq in sequences.iter() {
        let mut frames_2d = Vec::with_capacity(seq.frames_2d.len());
        for frame in &seq.frames_2d {
            frames_2d.push(root_center_frame(frame, 2, spec)?);
        }
        let frames_3d = match &seq.frames_3d {
            None => None,
            Some(frames) => {
                let mut centered = Vec::with_capacity(frames.len());
                for frame in frames {
                    let camera_frame = match &seq.extrinsics {
                        Some(cam) => camera::world_to_camera_frame(frame, cam),
                        None => frame.clone(),
                    };
                    centered.push(root_center_frame(&camera_frame, 3, spec)?);
                }
                Some(centered)
            }
        };
        out.push(PreparedSequence {
            subject: seq.subject.clone(),
            action: seq.action.clone(),
            camera: seq.camera.clone(),
            frames_2d,
            frames_3d,
        });
    }
    Ok(out)
}

/// Collects references to every 2D frame (and, separately, every 3D frame)
/// for fitting normalization statistics.
pub fn collect_frames(prepared: &[PreparedSequence]) -> (Vec<&[f64]>, Vec<&[f64]>) {
    let mut f2: Vec<&[f64]> = Vec::new();
    let mut f3: Vec<&[f64]> = Vec::new();
    for seq in prepared {
        for f in &seq.frames_2d {
            f2.push(f);
        }
        if let Some(frames) = &seq.frames_3d {
            for f in frames {
                f3.push(f);
            }
        }
    }
    (f2, f3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_symmetry() {
        let rows: Vec<&[f64]> = vec![&[0.0, 0.0], &[2.0, 2.0]];
        let stats = fit_norm(&rows).unwrap();
        assert_eq!(stats.mean, vec![1.0, 1.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
    }

    #[test]
    fn constant_column_hits_floor_and_normalizes_to_zero() {
        let rows: Vec<&[f64]> = vec![&[5.0, 1.0], &[5.0, 3.0], &[5.0, 5.0]];
        let stats = fit_norm(&rows).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let z = stats.normalize(&[5.0, 3.0]).unwrap();
        assert_eq!(z[0], 0.0);
        assert_eq!(z[1], 0.0);
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut state = 5u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 20.0 - 10.0
        };
        let table: Vec<Vec<f64>> = (0..100).map(|_| (0..4).map(|_| next()).collect()).collect();
        let rows: Vec<&[f64]> = table.iter().map(|r| r.as_slice()).collect();
        let stats = fit_norm(&rows).unwrap();

        for d in 0..4 {
            let mean = table.iter().map(|r| r[d]).sum::<f64>() / 100.0;
            let var = table.iter().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<f64>() / 100.0;
            assert!((stats.mean[d] - mean).abs() < 1e-10);
            assert!((stats.std[d] - var.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_input_rejected() {
        let rows: Vec<&[f64]> = vec![];
        assert!(fit_norm(&rows).is_err());
    }

    #[test]
    fn normalize_maps_mean_to_zero_and_mean_plus_std_to_one() {
        let stats = NormStats::new(vec![3.0, -1.0], vec![2.0, 4.0]).unwrap();
        assert_eq!(stats.normalize(&[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(stats.normalize(&[5.0, 3.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn roundtrip_identity() {
        let stats = NormStats::new(vec![10.0, -5.0, 0.5], vec![3.0, 0.1, 7.0]).unwrap();
        let v = [123.456, -0.789, 42.0];
        let back = stats.denormalize(&stats.normalize(&v).unwrap()).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let stats = NormStats::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert!(stats.normalize(&[0.0; 2]).is_err());
        assert!(stats.denormalize(&[0.0; 4]).is_err());
    }

    #[test]
    fn prepare_centers_and_transforms() {
        use crate::pipeline::synth::{synth_generate, SynthConfig};
        use crate::skeleton::SkeletonSpec;

        let spec = SkeletonSpec::default_17();
        let seqs = synth_generate(&SynthConfig::new(2, 6, 17)).unwrap();
        let prepared = prepare_sequences(&seqs, &spec, None).unwrap();
        assert_eq!(prepared.len(), 2);
        for (raw, prep) in seqs.iter().zip(&prepared) {
            assert_eq!(prep.frames_2d[0].len(), 32);
            let f3 = prep.frames_3d.as_ref().unwrap();
            assert_eq!(f3[0].len(), 48);
            // Spot-check one joint: camera transform then root subtraction.
            let cam = raw.extrinsics.as_ref().unwrap();
            let raw3 = &raw.frames_3d.as_ref().unwrap()[0];
            let root = cam.world_point_to_camera([raw3[0], raw3[1], raw3[2]]);
            let j5 = cam.world_point_to_camera([raw3[15], raw3[16], raw3[17]]);
            // Joint 5 sits at root-removed position 4.
            for k in 0..3 {
                assert!((f3[0][4 * 3 + k] - (j5[k] - root[k])).abs() < 1e-9);
            }
        }
    }
}
