use crate::error::{Error, Result};

/// Variance floor inside the layer-norm square root.
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Normalizes `x` by its own mean and population variance, then applies the
/// learned per-element gain and bias:
/// `y = gain * (x - mean) / sqrt(var + 1e-6) + bias`.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    check_layer_norm_shapes(x, gain, bias)?;
    let (mean, inv_std) = moments(x);
    Ok(x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&xi, (&g, &b))| g * (xi - mean) * inv_std + b)
        .collect())
}

/// Backward pass of [`layer_norm`]. Returns `(d_x, d_gain, d_bias)` for the
/// upstream cotangent `d_y`.
pub fn layer_norm_backward(
    x: &[f64],
    gain: &[f64],
    d_y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_layer_norm_shapes(x, gain, d_y)?;
    let n = x.len() as f64;
    let (mean, inv_std) = moments(x);

    let normalized: Vec<f64> = x.iter().map(|&xi| (xi - mean) * inv_std).collect();
    let d_gain: Vec<f64> = d_y.iter().zip(&normalized).map(|(dy, nx)| dy * nx).collect();
    let d_bias: Vec<f64> = d_y.to_vec();

    // d_x = inv_std * (g*dy - mean(g*dy) - normalized * mean(g*dy*normalized))
    let gdy: Vec<f64> = gain.iter().zip(d_y).map(|(g, dy)| g * dy).collect();
    let mean_gdy = gdy.iter().sum::<f64>() / n;
    let mean_gdy_nx = gdy.iter().zip(&normalized).map(|(v, nx)| v * nx).sum::<f64>() / n;
    let d_x: Vec<f64> = gdy
        .iter()
        .zip(&normalized)
        .map(|(v, nx)| inv_std * (v - mean_gdy - nx * mean_gdy_nx))
        .collect();

    Ok((d_x, d_gain, d_bias))
}

fn check_layer_norm_shapes(x: &[f64], a: &[f64], b: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "layer_norm needs vectors of length >= 2, got {}",
            x.len()
        )));
    }
    if a.len() != x.len() || b.len() != x.len() {
        return Err(Error::dim_mismatch(
            "layer_norm",
            x.len(),
            format!("{} / {}", a.len(), b.len()),
        ));
    }
    Ok(())
}

#[inline]
fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}
