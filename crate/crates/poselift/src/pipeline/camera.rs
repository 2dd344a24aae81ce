use crate::error::{Error, Result};
use crate::skeleton::Pose;
use serde::{Deserialize, Serialize};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Pinhole intrinsics used by the synthetic generator.
pub const SYNTH_FOCAL_PX: f64 = 1000.0;
pub const SYNTH_PRINCIPAL_PX: (f64, f64) = (500.0, 500.0);

/// Rigid camera pose: `rotation` maps world directions to camera axes and
/// `translation` is the camera position in world coordinates (mm), so a
/// world point `p` sits at `rotation * (p - translation)` in the camera
/// frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExtrinsics", into = "RawExtrinsics")]
pub struct CameraExtrinsics {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawExtrinsics {
    #[serde(rename = "R")]
    rotation: Vec<Vec<f64>>,
    #[serde(rename = "t")]
    translation: Vec<f64>,
}

impl TryFrom<RawExtrinsics> for CameraExtrinsics {
    type Error = Error;

    fn try_from(raw: RawExtrinsics) -> Result<Self> {
        if raw.rotation.len() != 3 || raw.rotation.iter().any(|r| r.len() != 3) {
            return Err(Error::dim_mismatch("extrinsics rotation", "3x3", "other"));
        }
        if raw.translation.len() != 3 {
            return Err(Error::dim_mismatch("extrinsics translation", 3, raw.translation.len()));
        }
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in raw.rotation.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                rotation[i][j] = v;
            }
        }
        let translation = [raw.translation[0], raw.translation[1], raw.translation[2]];
        CameraExtrinsics::new(rotation, translation)
    }
}

impl From<CameraExtrinsics> for RawExtrinsics {
    fn from(cam: CameraExtrinsics) -> Self {
        RawExtrinsics {
            rotation: cam.rotation.iter().map(|r| r.to_vec()).collect(),
            translation: cam.translation.to_vec(),
        }
    }
}

impl CameraExtrinsics {
    /// Validates orthonormality (`R^T R = I` within 1e-6) and a +1
    /// determinant (reflections rejected).
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        for row in &rotation {
            for v in row {
                if !v.is_finite() {
                    return Err(Error::non_finite("extrinsics rotation"));
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "extrinsics rotation is not orthonormal: (R^T R)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        let det = crate::numeric::svd3::mat3_det(&rotation);
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "extrinsics rotation determinant {det} != +1"
            )));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("extrinsics translation"));
        }
        Ok(CameraExtrinsics {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        CameraExtrinsics {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Camera at `eye` looking at `target`, world up `(0, 0, 1)`, image y
    /// pointing down.
    pub fn look_at(eye: [f64; 3], target: [f64; 3]) -> Result<Self> {
        let forward = normalize([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]])?;
        let up = [0.0, 0.0, 1.0];
        let right = normalize(cross(forward, up))?;
        let down = cross(forward, right);
        CameraExtrinsics::new([right, down, forward], eye)
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> &[f64; 3] {
        &self.translation
    }

    pub fn world_point_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [
            p[0] - self.translation[0],
            p[1] - self.translation[1],
            p[2] - self.translation[2],
        ];
        crate::numeric::svd3::mat3_apply(&self.rotation, &d)
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-12 {
        return Err(Error::Degenerate("zero-length camera axis".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

/// Maps every joint of a world-frame 3D pose into the camera frame.
pub fn world_to_camera(pose: &Pose, cam: &CameraExtrinsics) -> Result<Pose> {
    if pose.dim != 3 {
        return Err(Error::dim_mismatch("world_to_camera", 3, pose.dim));
    }
    Ok(Pose {
        coords: world_to_camera_frame(&pose.coords, cam),
        dim: 3,
    })
}

/// Slice form of [`world_to_camera`] for raw frame buffers (length 3J).
pub fn world_to_camera_frame(frame: &[f64], cam: &CameraExtrinsics) -> Vec<f64> {
    let mut out = Vec::with_capacity(frame.len());
    for joint in frame.chunks_exact(3) {
        let p = cam.world_point_to_camera([joint[0], joint[1], joint[2]]);
        out.extend_from_slice(&p);
    }
    out
}

/// Pinhole projection of a camera-frame point (mm) to pixels.
pub fn project_pinhole(p_cam: [f64; 3]) -> Result<[f64; 2]> {
    if p_cam[2] <= 0.0 {
        return Err(Error::Degenerate(format!(
            "point behind camera (depth {})",
            p_cam[2]
        )));
    }
    Ok([
        SYNTH_FOCAL_PX * p_cam[0] / p_cam[2] + SYNTH_PRINCIPAL_PX.0,
        SYNTH_FOCAL_PX * p_cam[1] / p_cam[2] + SYNTH_PRINCIPAL_PX.1,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Pose;

    fn pseudo_random(seed: u64, n: usize) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(11);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2000.0 - 1000.0
            })
            .collect()
    }

    #[test]
    fn identity_extrinsics_is_noop() {
        let cam = CameraExtrinsics::identity();
        let pose = Pose::new(pseudo_random(1, 9), 3).unwrap();
        let out = world_to_camera(&pose, &cam).unwrap();
        assert_eq!(out.coords, pose.coords);
    }

    #[test]
    fn quarter_turn_about_z() {
        // R maps x to -y: rotation about z with R*(1,0,0) = (0,-1,0).
        let rot = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let cam = CameraExtrinsics::new(rot, [0.0; 3]).unwrap();
        let pose = Pose::new(vec![1.0, 0.0, 0.0], 3).unwrap();
        let out = world_to_camera(&pose, &cam).unwrap();
        assert!((out.coords[0] - 0.0).abs() < 1e-15);
        assert!((out.coords[1] + 1.0).abs() < 1e-15);
        assert!((out.coords[2] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn preserves_pairwise_distances() {
        // Build a rotation from look_at (orthonormal by construction) and a
        // random translation; the map must be an isometry on joint pairs.
        let cam = CameraExtrinsics::look_at([900.0, -3500.0, 1600.0], [0.0, 0.0, 900.0]).unwrap();
        let coords = pseudo_random(3, 17 * 3);
        let pose = Pose::new(coords.clone(), 3).unwrap();
        let out = world_to_camera(&pose, &cam).unwrap();
        for a in 0..17 {
            for b in (a + 1)..17 {
                let da: f64 = (0..3)
                    .map(|k| (coords[a * 3 + k] - coords[b * 3 + k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let db: f64 = (0..3)
                    .map(|k| (out.coords[a * 3 + k] - out.coords[b * 3 + k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((da - db).abs() < 1e-9, "pair ({a},{b}): {da} vs {db}");
            }
        }
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let bad = [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(CameraExtrinsics::new(bad, [0.0; 3]).is_err());
    }

    #[test]
    fn reflection_rejected() {
        let mirror = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(CameraExtrinsics::new(mirror, [0.0; 3]).is_err());
    }

    #[test]
    fn pinhole_formula() {
        let p = project_pinhole([100.0, -200.0, 4000.0]).unwrap();
        assert!((p[0] - (1000.0 * 100.0 / 4000.0 + 500.0)).abs() < 1e-12);
        assert!((p[1] - (1000.0 * -200.0 / 4000.0 + 500.0)).abs() < 1e-12);
        assert!(project_pinhole([0.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn extrinsics_json_roundtrip() {
        let cam = CameraExtrinsics::look_at([800.0, -3800.0, 1200.0], [0.0, 0.0, 900.0]).unwrap();
        let text = serde_json::to_string(&cam).unwrap();
        let back: CameraExtrinsics = serde_json::from_str(&text).unwrap();
        assert_eq!(cam, back);
    }
}
