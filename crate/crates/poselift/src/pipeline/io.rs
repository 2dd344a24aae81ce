use crate::error::{Error, Result};
use crate::pipeline::camera::CameraExtrinsics;
use crate::skeleton::SkeletonSpec;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One motion sequence from a pose file: 2D detections per frame (pixels,
/// joint-major then axis), optional 3D ground truth (mm), and optional
/// camera extrinsics when the 3D is in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSequence {
    pub subject: String,
    pub action: String,
    pub camera: String,
    pub frames_2d: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames_3d: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrinsics: Option<CameraExtrinsics>,
}

impl PoseSequence {
    pub fn len(&self) -> usize {
        self.frames_2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames_2d.is_empty()
    }

    fn validate(&self, spec: &SkeletonSpec, line: usize) -> Result<()> {
        let want_2d = spec.n_joints() * 2;
        for (f, frame) in self.frames_2d.iter().enumerate() {
            if frame.len() != want_2d {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "frame {f}: expected {want_2d} 2D coordinates, got {}",
                        frame.len()
                    ),
                });
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line,
                    msg: format!("frame {f}: non-finite 2D coordinate"),
                });
            }
        }
        if let Some(frames_3d) = &self.frames_3d {
            if frames_3d.len() != self.frames_2d.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "3D frame count {} != 2D frame count {}",
                        frames_3d.len(),
                        self.frames_2d.len()
                    ),
                });
            }
            let want_3d = spec.n_joints() * 3;
            for (f, frame) in frames_3d.iter().enumerate() {
                if frame.len() != want_3d {
                    return Err(Error::Parse {
                        line,
                        msg: format!(
                            "frame {f}: expected {want_3d} 3D coordinates, got {}",
                            frame.len()
                        ),
                    });
                }
                if frame.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("frame {f}: non-finite 3D coordinate"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses a line-delimited pose file (one JSON object per line) and
/// validates every frame against the skeleton. Blank lines are skipped.
pub fn ingest(path: &Path, spec: &SkeletonSpec) -> Result<Vec<PoseSequence>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: PoseSequence = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        seq.validate(spec, line_no)?;
        out.push(seq);
    }
    Ok(out)
}

/// Writes sequences in the line-delimited pose format.
pub fn write_pose_file(path: &Path, sequences: &[PoseSequence]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = BufWriter::new(file);
    for seq in sequences {
        serde_json::to_writer(&mut writer, seq)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
