use crate::error::{Error, Result};
use crate::numeric::svd3::{mat3_apply, mat3_det, mat3_mul, mat3_transpose, svd3};

/// Uniform scale + rotation + translation. Reflections are excluded
/// (mirrored skeletons are anatomically invalid).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Applies `scale * R * p + t` to every joint of a flat 3D pose.
    pub fn apply(&self, pose: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(pose.len());
        for joint in pose.chunks_exact(3) {
            let r = mat3_apply(&self.rotation, &[joint[0], joint[1], joint[2]]);
            out.push(self.scale * r[0] + self.translation[0]);
            out.push(self.scale * r[1] + self.translation[1]);
            out.push(self.scale * r[2] + self.translation[2]);
        }
        out
    }
}

/// Least-squares similarity alignment of `pred` onto `gt` (flat 3D poses
/// with matching joint counts): the closed-form centroid/covariance/SVD
/// solution minimizing the sum of squared joint distances, with the
/// rotation constrained to be a proper rotation. Returns the aligned pose
/// and the recovered transform.
pub fn procrustes_align(pred: &[f64], gt: &[f64]) -> Result<(Vec<f64>, SimilarityTransform)> {
    if pred.len() != gt.len() {
        return Err(Error::dim_mismatch("procrustes_align", gt.len(), pred.len()));
    }
    if pred.len() % 3 != 0 || pred.len() < 9 {
        return Err(Error::InvalidArgument(format!(
            "procrustes_align needs at least 3 joints of 3D coordinates, got {} values",
            pred.len()
        )));
    }
    let n = pred.len() / 3;
    let n_f = n as f64;

    let mut centroid_pred = [0.0f64; 3];
    let mut centroid_gt = [0.0f64; 3];
    for j in 0..n {
        for k in 0..3 {
            centroid_pred[k] += pred[j * 3 + k];
            centroid_gt[k] += gt[j * 3 + k];
        }
    }
    for k in 0..3 {
        centroid_pred[k] /= n_f;
        centroid_gt[k] /= n_f;
    }

    // Covariance of the centered clouds (target-first outer products) and
    // the source variance for the scale.
    let mut cov = [[0.0f64; 3]; 3];
    let mut var_pred = 0.0f64;
    for j in 0..n {
        let p = [
            pred[j * 3] - centroid_pred[0],
            pred[j * 3 + 1] - centroid_pred[1],
            pred[j * 3 + 2] - centroid_pred[2],
        ];
        let g = [
            gt[j * 3] - centroid_gt[0],
            gt[j * 3 + 1] - centroid_gt[1],
            gt[j * 3 + 2] - centroid_gt[2],
        ];
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += g[r] * p[c];
            }
        }
        var_pred += p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n_f;
        }
    }
    var_pred /= n_f;
    if var_pred <= 0.0 {
        return Err(Error::Degenerate(
            "all predicted joints coincide; no similarity transform exists".into(),
        ));
    }

    let (u, d, v) = svd3(&cov);
    if d[1] <= d[0] * 1e-9 {
        return Err(Error::Degenerate(
            "covariance rank < 2 (collinear joints); alignment is not unique".into(),
        ));
    }

    // Proper-rotation correction: flip the weakest axis when the raw
    // solution would be a reflection.
    let sign = if mat3_det(&u) * mat3_det(&v) < 0.0 { -1.0 } else { 1.0 };
    let mut v_adj = v;
    for row in v_adj.iter_mut() {
        row[2] *= sign;
    }
    let rotation = mat3_mul(&u, &mat3_transpose(&v_adj));
    let trace = d[0] + d[1] + sign * d[2];
    let scale = trace / var_pred;
    if scale <= 0.0 {
        return Err(Error::Degenerate(format!(
            "non-positive similarity scale {scale}"
        )));
    }
    let rc = mat3_apply(&rotation, &centroid_pred);
    let translation = [
        centroid_gt[0] - scale * rc[0],
        centroid_gt[1] - scale * rc[1],
        centroid_gt[2] - scale * rc[2],
    ];

    let transform = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    Ok((transform.apply(pred), transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::mpjpe;

    fn pseudo_random_pose(n_joints: usize, seed: u64, spread: f64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(13);
        (0..n_joints * 3)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * spread - spread / 2.0
            })
            .collect()
    }

    fn rot_z_90() -> [[f64; 3]; 3] {
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    }

    #[test]
    fn identical_poses_give_identity_transform() {
        let pose = pseudo_random_pose(16, 4, 1000.0);
        let (aligned, t) = procrustes_align(&pose, &pose).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-9);
        for (i, row) in t.rotation.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-9);
            }
        }
        assert!(mpjpe(&aligned, &pose).unwrap() < 1e-9);
    }

    #[test]
    fn recovers_planted_similarity() {
        // pred = (1/s) R^T (gt - t) so that s R pred + t = gt exactly.
        let gt = pseudo_random_pose(16, 9, 800.0);
        let s = 2.0;
        let r = rot_z_90();
        let t = [1.0, 0.0, 0.0];
        let r_t = mat3_transpose(&r);
        let mut pred = Vec::with_capacity(gt.len());
        for joint in gt.chunks_exact(3) {
            let shifted = [joint[0] - t[0], joint[1] - t[1], joint[2] - t[2]];
            let back = mat3_apply(&r_t, &shifted);
            pred.extend_from_slice(&[back[0] / s, back[1] / s, back[2] / s]);
        }
        let (aligned, found) = procrustes_align(&pred, &gt).unwrap();
        assert!((found.scale - s).abs() < 1e-9, "scale {}", found.scale);
        for i in 0..3 {
            for j in 0..3 {
                assert!((found.rotation[i][j] - r[i][j]).abs() < 1e-9);
            }
            assert!((found.translation[i] - t[i]).abs() < 1e-9);
        }
        assert!(mpjpe(&aligned, &gt).unwrap() < 1e-9);
    }

    #[test]
    fn beats_random_similarity_transforms() {
        use rand::Rng;
        let mut rng = crate::numeric::StreamKey::from_seed(55).rng();
        for case in 0..5 {
            let pred = pseudo_random_pose(16, 100 + case, 900.0);
            let gt = pseudo_random_pose(16, 200 + case, 900.0);
            let (aligned, _) = procrustes_align(&pred, &gt).unwrap();
            let best = mpjpe_sq(&aligned, &gt);
            for _ in 0..200 {
                let t = SimilarityTransform {
                    scale: rng.gen_range(0.2..3.0),
                    rotation: random_rotation(&mut rng),
                    translation: [
                        rng.gen_range(-500.0..500.0),
                        rng.gen_range(-500.0..500.0),
                        rng.gen_range(-500.0..500.0),
                    ],
                };
                let candidate = mpjpe_sq(&t.apply(&pred), &gt);
                assert!(best <= candidate + 1e-9, "{best} > {candidate}");
            }
        }
    }

    fn mpjpe_sq(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    pub(crate) fn random_rotation(rng: &mut impl rand::Rng) -> [[f64; 3]; 3] {
        // Random unit quaternion -> rotation matrix.
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen();
        let tau = std::f64::consts::TAU;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = [
            a * (tau * u2).sin(),
            a * (tau * u2).cos(),
            b * (tau * u3).sin(),
            b * (tau * u3).cos(),
        ];
        let (x, y, z, w) = (q[0], q[1], q[2], q[3]);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    #[test]
    fn residual_invariant_to_presimilarity() {
        use rand::Rng;
        let mut rng = crate::numeric::StreamKey::from_seed(77).rng();
        let pred = pseudo_random_pose(16, 300, 700.0);
        let gt = pseudo_random_pose(16, 301, 700.0);
        let (aligned, _) = procrustes_align(&pred, &gt).unwrap();
        let base = mpjpe(&aligned, &gt).unwrap();
        for _ in 0..10 {
            let t = SimilarityTransform {
                scale: rng.gen_range(0.3..2.5),
                rotation: random_rotation(&mut rng),
                translation: [rng.gen_range(-300.0..300.0); 3],
            };
            let (aligned2, _) = procrustes_align(&t.apply(&pred), &gt).unwrap();
            let again = mpjpe(&aligned2, &gt).unwrap();
            assert!((base - again).abs() < 1e-6, "{base} vs {again}");
        }
    }

    #[test]
    fn collinear_joints_rejected() {
        let pred: Vec<f64> = (0..5).flat_map(|i| [i as f64, 0.0, 0.0]).collect();
        let gt = pseudo_random_pose(5, 1, 100.0);
        let err = procrustes_align(&pred, &gt).unwrap_err();
        assert!(err.to_string().contains("rank"), "{err}");
    }

    #[test]
    fn too_few_joints_rejected() {
        assert!(procrustes_align(&[0.0; 6], &[0.0; 6]).is_err());
    }
}
