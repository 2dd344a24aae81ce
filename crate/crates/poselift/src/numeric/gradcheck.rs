use crate::error::{Error, Result};

pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares analytic gradients against central finite differences.
///
/// Evaluates `f` at `params` perturbed by ±1e-5 along each coordinate in
/// `coords` (all coordinates when `coords` is `None`) and returns the maximum
/// relative error `|analytic - numeric| / max(1, |analytic| + |numeric|)`.
pub fn grad_check<F>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    coords: Option<&[usize]>,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(Error::dim_mismatch("grad_check", params.len(), analytic.len()));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };

    let mut work = params.to_vec();
    let mut max_err = 0.0f64;
    for &i in coords {
        if i >= params.len() {
            return Err(Error::InvalidArgument(format!(
                "grad_check coordinate {i} out of range {}",
                params.len()
            )));
        }
        let orig = work[i];
        work[i] = orig + GRAD_CHECK_STEP;
        let plus = f(&work)?;
        work[i] = orig - GRAD_CHECK_STEP;
        let minus = f(&work)?;
        work[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::non_finite(format!("grad_check f at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let denom = 1.0f64.max(analytic[i].abs() + numeric.abs());
        max_err = max_err.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(max_err)
}
