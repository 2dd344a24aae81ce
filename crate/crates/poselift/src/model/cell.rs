use crate::error::{Error, Result};
use crate::numeric::ops::{layer_norm, layer_norm_backward, sigmoid};
use crate::numeric::{xavier_uniform, Matrix};
use rand_chacha::ChaCha8Rng;

/// Parameters of one layer-normalized LSTM cell.
///
/// The four gates (input, forget, candidate, output) are packed along the
/// columns of `w_x`/`w_h` in that order. Separate layer norms act on the
/// input-sum and hidden-sum pre-activations (statistics per gate chunk, per
/// example) and on the cell state before the output tanh:
///
/// ```text
/// pre = LN_x(x W_x) + LN_h(h_prev W_h) + b
/// c   = sigmoid(pre_f) * c_prev + sigmoid(pre_i) * tanh(pre_g)
/// h   = sigmoid(pre_o) * tanh(LN_c(c))
/// ```
///
/// Dropout touches only the non-recurrent input `x`; the recurrent path
/// stays intact so the cell can carry information across time.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vec<f64>,
    pub ln_x_gain: Vec<f64>,
    pub ln_x_bias: Vec<f64>,
    pub ln_h_gain: Vec<f64>,
    pub ln_h_bias: Vec<f64>,
    pub ln_c_gain: Vec<f64>,
    pub ln_c_bias: Vec<f64>,
    pub input_size: usize,
    pub hidden: usize,
}

impl CellParams {
    pub fn init(input_size: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<CellParams> {
        if hidden < 2 {
            return Err(Error::InvalidArgument(
                "hidden size must be >= 2 for per-gate layer normalization".into(),
            ));
        }
        Ok(CellParams {
            w_x: xavier_uniform(input_size, 4 * hidden, rng)?,
            w_h: xavier_uniform(hidden, 4 * hidden, rng)?,
            b: vec![0.0; 4 * hidden],
            ln_x_gain: vec![1.0; 4 * hidden],
            ln_x_bias: vec![0.0; 4 * hidden],
            ln_h_gain: vec![1.0; 4 * hidden],
            ln_h_bias: vec![0.0; 4 * hidden],
            ln_c_gain: vec![1.0; hidden],
            ln_c_bias: vec![0.0; hidden],
            input_size,
            hidden,
        })
    }

    pub fn zeros(input_size: usize, hidden: usize) -> CellParams {
        CellParams {
            w_x: Matrix::zeros(input_size, 4 * hidden),
            w_h: Matrix::zeros(hidden, 4 * hidden),
            b: vec![0.0; 4 * hidden],
            ln_x_gain: vec![0.0; 4 * hidden],
            ln_x_bias: vec![0.0; 4 * hidden],
            ln_h_gain: vec![0.0; 4 * hidden],
            ln_h_bias: vec![0.0; 4 * hidden],
            ln_c_gain: vec![0.0; hidden],
            ln_c_bias: vec![0.0; hidden],
            input_size,
            hidden,
        }
    }
}

/// Gradients mirroring [`CellParams`].
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vec<f64>,
    pub ln_x_gain: Vec<f64>,
    pub ln_x_bias: Vec<f64>,
    pub ln_h_gain: Vec<f64>,
    pub ln_h_bias: Vec<f64>,
    pub ln_c_gain: Vec<f64>,
    pub ln_c_bias: Vec<f64>,
}

impl CellGrads {
    pub fn zeros(input_size: usize, hidden: usize) -> CellGrads {
        CellGrads {
            w_x: Matrix::zeros(input_size, 4 * hidden),
            w_h: Matrix::zeros(hidden, 4 * hidden),
            b: vec![0.0; 4 * hidden],
            ln_x_gain: vec![0.0; 4 * hidden],
            ln_x_bias: vec![0.0; 4 * hidden],
            ln_h_gain: vec![0.0; 4 * hidden],
            ln_h_bias: vec![0.0; 4 * hidden],
            ln_c_gain: vec![0.0; hidden],
            ln_c_bias: vec![0.0; hidden],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct CellStepCache {
    /// Input after dropout mask and inverted scaling.
    pub x_tilde: Matrix,
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    /// Raw input-sum pre-activations `x_tilde W_x` (before layer norm).
    pub ax: Matrix,
    /// Raw hidden-sum pre-activations `h_prev W_h`.
    pub ah: Matrix,
    /// Post-activation gates packed i|f|g|o (sigmoid/tanh applied).
    pub gates: Matrix,
    pub c: Matrix,
    pub h: Matrix,
    /// 0/1 dropout mask over x, with the keep probability; `None` when no
    /// dropout was applied.
    pub dropout: Option<(Matrix, f64)>,
}

/// Applies per-gate layer normalization to every row of an `N x 4H` matrix.
fn ln_gates(m: &Matrix, gain: &[f64], bias: &[f64], hidden: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let row = m.row(i);
        for gate in 0..4 {
            let span = gate * hidden..(gate + 1) * hidden;
            let y = layer_norm(&row[span.clone()], &gain[span.clone()], &bias[span.clone()])?;
            out.row_mut(i)[span].copy_from_slice(&y);
        }
    }
    Ok(out)
}

/// Backward of [`ln_gates`]: returns the input cotangent and accumulates
/// gain/bias gradients.
fn ln_gates_backward(
    m: &Matrix,
    gain: &[f64],
    d_y: &Matrix,
    hidden: usize,
    d_gain: &mut [f64],
    d_bias: &mut [f64],
) -> Result<Matrix> {
    let mut d_m = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let row = m.row(i);
        let dy_row = d_y.row(i);
        for gate in 0..4 {
            let span = gate * hidden..(gate + 1) * hidden;
            let (dx, dg, db) =
                layer_norm_backward(&row[span.clone()], &gain[span.clone()], &dy_row[span.clone()])?;
            d_m.row_mut(i)[span.clone()].copy_from_slice(&dx);
            for (slot, v) in d_gain[span.clone()].iter_mut().zip(&dg) {
                *slot += v;
            }
            for (slot, v) in d_bias[span].iter_mut().zip(&db) {
                *slot += v;
            }
        }
    }
    Ok(d_m)
}

/// One forward step over a batch. `x` rows are cell inputs; `dropout`
/// supplies an optional 0/1 mask with its drop probability (inverted
/// scaling happens here, so inference needs no rescaling). With
/// `layer_norm` false all three norms become identity maps.
pub fn cell_step(
    params: &CellParams,
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    dropout: Option<(Matrix, f64)>,
    layer_norm_enabled: bool,
) -> Result<(Matrix, Matrix, CellStepCache)> {
    let hidden = params.hidden;
    if x.cols() != params.input_size {
        return Err(Error::dim_mismatch("cell input", params.input_size, x.cols()));
    }
    if h_prev.cols() != hidden || c_prev.cols() != hidden {
        return Err(Error::dim_mismatch(
            "cell state",
            hidden,
            format!("{}/{}", h_prev.cols(), c_prev.cols()),
        ));
    }
    if h_prev.rows() != x.rows() || c_prev.rows() != x.rows() {
        return Err(Error::dim_mismatch(
            "cell batch",
            x.rows(),
            format!("{}/{}", h_prev.rows(), c_prev.rows()),
        ));
    }

    let x_tilde = match &dropout {
        None => x.clone(),
        Some((mask, p)) => {
            if mask.rows() != x.rows() || mask.cols() != x.cols() {
                return Err(Error::dim_mismatch(
                    "dropout mask",
                    format!("{}x{}", x.rows(), x.cols()),
                    format!("{}x{}", mask.rows(), mask.cols()),
                ));
            }
            let keep = 1.0 - p;
            let mut m = x.clone();
            for (v, k) in m.data_mut().iter_mut().zip(mask.data()) {
                *v = *v * k / keep;
            }
            m
        }
    };

    let ax = x_tilde.matmul(&params.w_x)?;
    let ah = h_prev.matmul(&params.w_h)?;
    let mut pre = if layer_norm_enabled {
        let mut p = ln_gates(&ax, &params.ln_x_gain, &params.ln_x_bias, hidden)?;
        p.add_assign(&ln_gates(&ah, &params.ln_h_gain, &params.ln_h_bias, hidden)?)?;
        p
    } else {
        let mut p = ax.clone();
        p.add_assign(&ah)?;
        p
    };
    pre.add_row_vector(&params.b)?;

    let n = x.rows();
    let mut gates = Matrix::zeros(n, 4 * hidden);
    let mut c = Matrix::zeros(n, hidden);
    let mut h = Matrix::zeros(n, hidden);
    for i in 0..n {
        let pre_row = pre.row(i);
        let gates_row = gates.row_mut(i);
        for j in 0..hidden {
            gates_row[j] = sigmoid(pre_row[j]); // input gate
            gates_row[hidden + j] = sigmoid(pre_row[hidden + j]); // forget gate
            gates_row[2 * hidden + j] = pre_row[2 * hidden + j].tanh(); // candidate
            gates_row[3 * hidden + j] = sigmoid(pre_row[3 * hidden + j]); // output gate
        }
        for j in 0..hidden {
            let cv = gates_row[hidden + j] * c_prev.get(i, j) + gates_row[j] * gates_row[2 * hidden + j];
            c.set(i, j, cv);
        }
        let c_row = c.row(i).to_vec();
        let c_normed = if layer_norm_enabled {
            layer_norm(&c_row, &params.ln_c_gain, &params.ln_c_bias)?
        } else {
            c_row
        };
        for j in 0..hidden {
            h.set(i, j, gates.get(i, 3 * hidden + j) * c_normed[j].tanh());
        }
    }

    let cache = CellStepCache {
        x_tilde,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        ax,
        ah,
        gates,
        c: c.clone(),
        h: h.clone(),
        dropout,
    };
    Ok((h, c, cache))
}

/// Exact backward of [`cell_step`]. `d_h`/`d_c` are the cotangents flowing
/// into this step's outputs. Returns the cotangents for the (pre-dropout)
/// input and the previous hidden/cell state, accumulating parameter
/// gradients into `grads`.
pub fn cell_backward(
    params: &CellParams,
    cache: &CellStepCache,
    d_h: &Matrix,
    d_c_in: &Matrix,
    layer_norm_enabled: bool,
    grads: &mut CellGrads,
) -> Result<(Matrix, Matrix, Matrix)> {
    let hidden = params.hidden;
    let n = cache.h.rows();

    let mut d_pre = Matrix::zeros(n, 4 * hidden);
    let mut d_c_prev = Matrix::zeros(n, hidden);
    for i in 0..n {
        let gates_row = cache.gates.row(i);
        let c_row = cache.c.row(i);

        // h = o * tanh(cn), cn = LN_c(c) (or c itself without layer norm).
        let cn: Vec<f64> = if layer_norm_enabled {
            layer_norm(c_row, &params.ln_c_gain, &params.ln_c_bias)?
        } else {
            c_row.to_vec()
        };
        let mut d_cn = vec![0.0; hidden];
        let mut d_o = vec![0.0; hidden];
        for j in 0..hidden {
            let o = gates_row[3 * hidden + j];
            let tcn = cn[j].tanh();
            d_o[j] = d_h.get(i, j) * tcn;
            d_cn[j] = d_h.get(i, j) * o * (1.0 - tcn * tcn);
        }
        let d_c_from_h: Vec<f64> = if layer_norm_enabled {
            let (dx, dg, db) = layer_norm_backward(c_row, &params.ln_c_gain, &d_cn)?;
            for (slot, v) in grads.ln_c_gain.iter_mut().zip(&dg) {
                *slot += v;
            }
            for (slot, v) in grads.ln_c_bias.iter_mut().zip(&db) {
                *slot += v;
            }
            dx
        } else {
            d_cn
        };

        let d_pre_row = d_pre.row_mut(i);
        for j in 0..hidden {
            let d_c_total = d_c_in.get(i, j) + d_c_from_h[j];
            let i_gate = gates_row[j];
            let f_gate = gates_row[hidden + j];
            let g_gate = gates_row[2 * hidden + j];
            let o_gate = gates_row[3 * hidden + j];

            // c = f * c_prev + i * g
            let d_i = d_c_total * g_gate;
            let d_f = d_c_total * cache.c_prev.get(i, j);
            let d_g = d_c_total * i_gate;
            d_c_prev.set(i, j, d_c_total * f_gate);

            d_pre_row[j] = d_i * i_gate * (1.0 - i_gate);
            d_pre_row[hidden + j] = d_f * f_gate * (1.0 - f_gate);
            d_pre_row[2 * hidden + j] = d_g * (1.0 - g_gate * g_gate);
            d_pre_row[3 * hidden + j] = d_o[j] * o_gate * (1.0 - o_gate);
        }
    }

    for (slot, v) in grads.b.iter_mut().zip(d_pre.column_sums()) {
        *slot += v;
    }

    let (d_ax, d_ah) = if layer_norm_enabled {
        let d_ax = ln_gates_backward(
            &cache.ax,
            &params.ln_x_gain,
            &d_pre,
            hidden,
            &mut grads.ln_x_gain,
            &mut grads.ln_x_bias,
        )?;
        let d_ah = ln_gates_backward(
            &cache.ah,
            &params.ln_h_gain,
            &d_pre,
            hidden,
            &mut grads.ln_h_gain,
            &mut grads.ln_h_bias,
        )?;
        (d_ax, d_ah)
    } else {
        (d_pre.clone(), d_pre.clone())
    };

    grads.w_x.add_assign(&cache.x_tilde.transpose().matmul(&d_ax)?)?;
    grads.w_h.add_assign(&cache.h_prev.transpose().matmul(&d_ah)?)?;
    let d_x_tilde = d_ax.matmul(&params.w_x.transpose())?;
    let d_h_prev = d_ah.matmul(&params.w_h.transpose())?;

    let d_x = match &cache.dropout {
        None => d_x_tilde,
        Some((mask, p)) => {
            let keep = 1.0 - p;
            let mut d = d_x_tilde;
            for (v, k) in d.data_mut().iter_mut().zip(mask.data()) {
                *v = *v * k / keep;
            }
            d
        }
    };
    Ok((d_x, d_h_prev, d_c_prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ops::layer_norm;

    #[test]
    fn all_zero_params_give_zero_state() {
        let params = CellParams::zeros(4, 3);
        let x = Matrix::from_vec(1, 4, vec![0.5, -1.0, 2.0, 0.1]).unwrap();
        let h0 = Matrix::zeros(1, 3);
        let c0 = Matrix::zeros(1, 3);
        let (h, c, _) = cell_step(&params, &x, &h0, &c0, None, true).unwrap();
        for &v in h.data() {
            assert_eq!(v, 0.0);
        }
        for &v in c.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn zero_weights_halve_previous_cell_state() {
        // With zero weights and zero layer-norm gains the gate
        // pre-activations vanish, so both retained and written content get
        // sigmoid(0) = 1/2: c' = c/2, and h = 1/2 * tanh(LN_c(c/2)) which is
        // zero while the cell-output gain is zero.
        let params = CellParams::zeros(4, 3);
        let x = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let h0 = Matrix::zeros(1, 3);
        let c0 = Matrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let (h, c, _) = cell_step(&params, &x, &h0, &c0, None, true).unwrap();
        assert_eq!(c.data(), &[0.5, -1.0, 0.25]);
        for &v in h.data() {
            assert_eq!(v, 0.0);
        }

        // Unit cell-output gain instead: h = 1/2 * tanh(LN(c/2)).
        let mut params = CellParams::zeros(4, 3);
        params.ln_c_gain = vec![1.0; 3];
        let (h, c, _) = cell_step(&params, &x, &h0, &c0, None, true).unwrap();
        assert_eq!(c.data(), &[0.5, -1.0, 0.25]);
        let expect = layer_norm(&[0.5, -1.0, 0.25], &[1.0; 3], &[0.0; 3]).unwrap();
        for (got, e) in h.data().iter().zip(&expect) {
            assert!((got - 0.5 * e.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let mut rng = crate::numeric::StreamKey::from_seed(5).rng();
        let params = CellParams::init(4, 3, &mut rng).unwrap();
        let x = Matrix::from_vec(2, 4, vec![0.1, -0.2, 0.3, 0.4, 1.0, 0.0, -1.0, 0.5]).unwrap();
        let h0 = Matrix::zeros(2, 3);
        let c0 = Matrix::zeros(2, 3);
        let (h1, c1, _) = cell_step(&params, &x, &h0, &c0, None, true).unwrap();
        let (h2, c2, _) = cell_step(&params, &x, &h0, &c0, None, true).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Scalar objective: weighted sum of h and c outputs. Checks every
        // parameter class of the cell, with and without layer norm.
        for layer_norm_enabled in [true, false] {
            let mut rng = crate::numeric::StreamKey::from_seed(42).rng();
            let params = CellParams::init(3, 4, &mut rng).unwrap();
            let x = Matrix::from_vec(2, 3, vec![0.3, -0.6, 0.9, -0.2, 0.8, 0.1]).unwrap();
            let h0 = Matrix::from_vec(2, 4, vec![0.1; 8]).unwrap();
            let c0 = Matrix::from_vec(2, 4, vec![-0.2, 0.4, 0.0, 0.3, 0.2, -0.5, 0.7, 0.1]).unwrap();

            let loss_of = |p: &CellParams| -> f64 {
                let (h, c, _) = cell_step(p, &x, &h0, &c0, None, layer_norm_enabled).unwrap();
                let mut acc = 0.0;
                for (k, v) in h.data().iter().enumerate() {
                    acc += v * (0.3 + 0.1 * k as f64);
                }
                for (k, v) in c.data().iter().enumerate() {
                    acc += v * (-0.2 + 0.05 * k as f64);
                }
                acc
            };

            let (h, c, cache) = cell_step(&params, &x, &h0, &c0, None, layer_norm_enabled).unwrap();
            let d_h = Matrix::from_fn(h.rows(), h.cols(), |i, j| 0.3 + 0.1 * (i * h.cols() + j) as f64);
            let d_c = Matrix::from_fn(c.rows(), c.cols(), |i, j| -0.2 + 0.05 * (i * c.cols() + j) as f64);
            let mut grads = CellGrads::zeros(3, 4);
            cell_backward(&params, &cache, &d_h, &d_c, layer_norm_enabled, &mut grads).unwrap();

            let h_step = 1e-5;
            let check = |name: &str, get: &dyn Fn(&CellParams) -> Vec<f64>,
                             set: &dyn Fn(&mut CellParams, usize, f64),
                             analytic: &[f64]| {
                let base = get(&params);
                for i in 0..base.len() {
                    let mut p_plus = params.clone();
                    set(&mut p_plus, i, base[i] + h_step);
                    let mut p_minus = params.clone();
                    set(&mut p_minus, i, base[i] - h_step);
                    let numeric = (loss_of(&p_plus) - loss_of(&p_minus)) / (2.0 * h_step);
                    let denom = 1.0f64.max(numeric.abs() + analytic[i].abs());
                    assert!(
                        (numeric - analytic[i]).abs() / denom < 1e-6,
                        "{name}[{i}] (ln={layer_norm_enabled}): {numeric} vs {}",
                        analytic[i]
                    );
                }
            };

            check(
                "w_x",
                &|p| p.w_x.data().to_vec(),
                &|p, i, v| p.w_x.data_mut()[i] = v,
                grads.w_x.data(),
            );
            check(
                "w_h",
                &|p| p.w_h.data().to_vec(),
                &|p, i, v| p.w_h.data_mut()[i] = v,
                grads.w_h.data(),
            );
            check("b", &|p| p.b.clone(), &|p, i, v| p.b[i] = v, &grads.b);
            if layer_norm_enabled {
                check(
                    "ln_x_gain",
                    &|p| p.ln_x_gain.clone(),
                    &|p, i, v| p.ln_x_gain[i] = v,
                    &grads.ln_x_gain,
                );
                check(
                    "ln_h_gain",
                    &|p| p.ln_h_gain.clone(),
                    &|p, i, v| p.ln_h_gain[i] = v,
                    &grads.ln_h_gain,
                );
                check(
                    "ln_c_gain",
                    &|p| p.ln_c_gain.clone(),
                    &|p, i, v| p.ln_c_gain[i] = v,
                    &grads.ln_c_gain,
                );
                check(
                    "ln_c_bias",
                    &|p| p.ln_c_bias.clone(),
                    &|p, i, v| p.ln_c_bias[i] = v,
                    &grads.ln_c_bias,
                );
            }
        }
    }

    #[test]
    fn input_and_state_cotangents_match_finite_differences() {
        let mut rng = crate::numeric::StreamKey::from_seed(9).rng();
        let params = CellParams::init(3, 4, &mut rng).unwrap();
        let x = Matrix::from_vec(1, 3, vec![0.5, -0.1, 0.7]).unwrap();
        let h0 = Matrix::from_vec(1, 4, vec![0.2, -0.3, 0.1, 0.4]).unwrap();
        let c0 = Matrix::from_vec(1, 4, vec![-0.1, 0.6, 0.2, -0.4]).unwrap();

        let loss_of = |x: &Matrix, h0: &Matrix, c0: &Matrix| -> f64 {
            let (h, _, _) = cell_step(&params, x, h0, c0, None, true).unwrap();
            h.data().iter().sum()
        };

        let (_, _, cache) = cell_step(&params, &x, &h0, &c0, None, true).unwrap();
        let d_h = Matrix::from_fn(1, 4, |_, _| 1.0);
        let d_c = Matrix::zeros(1, 4);
        let mut grads = CellGrads::zeros(3, 4);
        let (d_x, d_h0, d_c0) =
            cell_backward(&params, &cache, &d_h, &d_c, true, &mut grads).unwrap();

        let h_step = 1e-5;
        for i in 0..3 {
            let mut xp = x.clone();
            xp.data_mut()[i] += h_step;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h_step;
            let numeric = (loss_of(&xp, &h0, &c0) - loss_of(&xm, &h0, &c0)) / (2.0 * h_step);
            assert!((numeric - d_x.data()[i]).abs() < 1e-7);
        }
        for i in 0..4 {
            let mut hp = h0.clone();
            hp.data_mut()[i] += h_step;
            let mut hm = h0.clone();
            hm.data_mut()[i] -= h_step;
            let numeric = (loss_of(&x, &hp, &c0) - loss_of(&x, &hm, &c0)) / (2.0 * h_step);
            assert!((numeric - d_h0.data()[i]).abs() < 1e-7);

            let mut cp = c0.clone();
            cp.data_mut()[i] += h_step;
            let mut cm = c0.clone();
            cm.data_mut()[i] -= h_step;
            let numeric = (loss_of(&x, &h0, &cp) - loss_of(&x, &h0, &cm)) / (2.0 * h_step);
            assert!((numeric - d_c0.data()[i]).abs() < 1e-7);
        }
    }
}
