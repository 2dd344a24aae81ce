//! Composite training objective: mean squared error on the predicted 3D
//! sequences plus a per-group-weighted penalty on their first temporal
//! differences, with the exact gradient.

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::skeleton::{JointGroup, SkeletonSpec};
use serde::{Deserialize, Serialize};

/// Scalar weights of the objective. `mse` and `smoothness` trade off the
/// two terms; the remaining three scale the temporal derivatives of the
/// torso/head, leg, and arm joint groups (higher for groups predicted with
/// higher error).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub mse: f64,
    pub smoothness: f64,
    pub torso_head: f64,
    pub limb_leg: f64,
    pub limb_arm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mse: 1.0,
            smoothness: 5.0,
            torso_head: 1.0,
            limb_leg: 2.5,
            limb_arm: 4.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("mse", self.mse),
            ("smoothness", self.smoothness),
            ("torso_head", self.torso_head),
            ("limb_leg", self.limb_leg),
            ("limb_arm", self.limb_arm),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "loss weight `{name}` must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn group_weight(&self, group: JointGroup) -> f64 {
        match group {
            JointGroup::TorsoHead => self.torso_head,
            JointGroup::LimbLeg => self.limb_leg,
            JointGroup::LimbArm => self.limb_arm,
        }
    }
}

fn check_shapes(pred: &[Matrix], target: &[Matrix]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::dim_mismatch("loss timesteps", target.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("loss".into()));
    }
    for (t, (p, y)) in pred.iter().zip(target).enumerate() {
        if p.rows() != y.rows() || p.cols() != y.cols() {
            return Err(Error::dim_mismatch(
                format!("loss at timestep {t}"),
                format!("{}x{}", y.rows(), y.cols()),
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
        if p.rows() != pred[0].rows() || p.cols() != pred[0].cols() {
            return Err(Error::dim_mismatch(
                format!("loss timestep {t} shape"),
                format!("{}x{}", pred[0].rows(), pred[0].cols()),
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
    }
    Ok(())
}

/// Mean squared error over sequences and timesteps:
/// `1/(N*T) * sum_i sum_t |pred[i,t] - target[i,t]|^2`.
pub fn mse_term(pred: &[Matrix], target: &[Matrix]) -> Result<f64> {
    check_shapes(pred, target)?;
    let n = pred[0].rows() as f64;
    let t_len = pred.len() as f64;
    let mut acc = 0.0;
    for (p, y) in pred.iter().zip(target) {
        for (a, b) in p.data().iter().zip(y.data()) {
            let d = a - b;
            acc += d * d;
        }
    }
    Ok(acc / (n * t_len))
}

/// Per-coordinate group weights for a root-removed 3D pose vector.
fn coordinate_weights(spec: &SkeletonSpec, w: &LossWeights, dim_3d: usize) -> Result<Vec<f64>> {
    let mut weights = vec![f64::NAN; dim_3d];
    for group in JointGroup::ALL {
        for idx in spec.group_mask(group, 3) {
            if idx >= dim_3d {
                return Err(Error::dim_mismatch(
                    "smoothness coordinate mask",
                    format!("< {dim_3d}"),
                    idx,
                ));
            }
            weights[idx] = w.group_weight(group);
        }
    }
    if weights.iter().any(|v| v.is_nan()) {
        return Err(Error::dim_mismatch(
            "smoothness coordinate mask",
            format!("{} coordinates covered", dim_3d),
            "gaps",
        ));
    }
    Ok(weights)
}

/// Weighted mean squared first difference of the predictions over time:
/// `1/(N*(T-1)) * sum_i sum_{t>=2} sum_groups w_g |delta_g|^2` where
/// `delta_g` is the frame difference restricted to the group's coordinates.
pub fn smoothness_term(pred: &[Matrix], spec: &SkeletonSpec, w: &LossWeights) -> Result<f64> {
    if pred.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "smoothness term needs at least 2 timesteps, got {}",
            pred.len()
        )));
    }
    let n = pred[0].rows() as f64;
    let dim = pred[0].cols();
    let weights = coordinate_weights(spec, w, dim)?;
    let mut acc = 0.0;
    for t in 1..pred.len() {
        let (cur, prev) = (&pred[t], &pred[t - 1]);
        for i in 0..cur.rows() {
            let (rc, rp) = (cur.row(i), prev.row(i));
            for d in 0..dim {
                let delta = rc[d] - rp[d];
                acc += weights[d] * delta * delta;
            }
        }
    }
    Ok(acc / (n * (pred.len() as f64 - 1.0)))
}

/// `mse_weight * mse_term + smoothness_weight * smoothness_term`. With a
/// single timestep the smoothness term is dropped (no derivative exists).
pub fn total_loss(
    pred: &[Matrix],
    target: &[Matrix],
    spec: &SkeletonSpec,
    w: &LossWeights,
) -> Result<f64> {
    let mse = mse_term(pred, target)?;
    let smooth = if pred.len() >= 2 && w.smoothness != 0.0 {
        smoothness_term(pred, spec, w)?
    } else {
        0.0
    };
    Ok(w.mse * mse + w.smoothness * smooth)
}

/// Exact gradient of [`total_loss`] with respect to the predictions.
pub fn total_loss_grad(
    pred: &[Matrix],
    target: &[Matrix],
    spec: &SkeletonSpec,
    w: &LossWeights,
) -> Result<Vec<Matrix>> {
    check_shapes(pred, target)?;
    let n = pred[0].rows() as f64;
    let t_len = pred.len();
    let dim = pred[0].cols();

    let mse_scale = 2.0 * w.mse / (n * t_len as f64);
    let mut grads: Vec<Matrix> = Vec::with_capacity(t_len);
    for (p, y) in pred.iter().zip(target) {
        let mut g = Matrix::zeros(p.rows(), dim);
        for ((gv, a), b) in g.data_mut().iter_mut().zip(p.data()).zip(y.data()) {
            *gv = mse_scale * (a - b);
        }
        grads.push(g);
    }

    if t_len >= 2 && w.smoothness != 0.0 {
        let weights = coordinate_weights(spec, w, dim)?;
        let smooth_scale = 2.0 * w.smoothness / (n * (t_len as f64 - 1.0));
        // Each difference (t-1, t) pushes +delta onto t and -delta onto t-1.
        for t in 1..t_len {
            for i in 0..pred[0].rows() {
                for d in 0..dim {
                    let delta = pred[t].get(i, d) - pred[t - 1].get(i, d);
                    let v = smooth_scale * weights[d] * delta;
                    let cur = grads[t].get(i, d);
                    grads[t].set(i, d, cur + v);
                    let prev = grads[t - 1].get(i, d);
                    grads[t - 1].set(i, d, prev - v);
                }
            }
        }
    }
    Ok(grads)
}
