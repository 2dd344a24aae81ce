//! The sequence-to-sequence lifting network.
//!
//! The encoder consumes the time-reversed, normalized 2D frames and hands
//! its final hidden/cell state to the decoder. The decoder starts from a
//! constant all-ones token, feeds its own previous output back as the next
//! input (in training and inference alike), and each output adds the
//! predicted delta to its input through a residual connection, so the
//! network learns frame-to-frame perturbations rather than absolute poses.

pub mod cell;
pub mod checkpoint;

pub use cell::{cell_backward, cell_step, CellGrads, CellParams, CellStepCache};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, StreamKey};
use crate::pipeline::SequenceBatch;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sizes and architecture switches, fixed at construction and persisted in
/// checkpoints. `residual`/`layer_norm` exist for the ablation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input_2d: usize,
    pub output_3d: usize,
    pub hidden: usize,
    pub train_seq_len: usize,
    pub residual: bool,
    pub layer_norm: bool,
    pub input_proj: bool,
}

impl ModelDims {
    pub fn new(input_2d: usize, output_3d: usize, hidden: usize, train_seq_len: usize) -> Self {
        ModelDims {
            input_2d,
            output_3d,
            hidden,
            train_seq_len,
            residual: true,
            layer_norm: true,
            input_proj: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_2d == 0 || self.output_3d == 0 || self.train_seq_len == 0 {
            return Err(Error::InvalidArgument(
                "model dims must be positive".into(),
            ));
        }
        if self.hidden < 2 {
            return Err(Error::InvalidArgument(
                "hidden size must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub encoder: CellParams,
    pub decoder: CellParams,
    /// Optional learned map from the fed-back pose to the decoder cell
    /// input; identity (absent) by default since both sides share the
    /// root-removed 3D dimension.
    pub dec_input_proj: Option<Matrix>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains. Each
    /// parameter block draws from its own labeled stream.
    pub fn init(dims: ModelDims, key: &StreamKey) -> Result<ModelParams> {
        dims.validate()?;
        let encoder = CellParams::init(dims.input_2d, dims.hidden, &mut key.child("encoder").rng())?;
        let decoder = CellParams::init(dims.output_3d, dims.hidden, &mut key.child("decoder").rng())?;
        let dec_input_proj = if dims.input_proj {
            Some(crate::numeric::xavier_uniform(
                dims.output_3d,
                dims.output_3d,
                &mut key.child("input_proj").rng(),
            )?)
        } else {
            None
        };
        let w_out = crate::numeric::xavier_uniform(
            dims.hidden,
            dims.output_3d,
            &mut key.child("output_proj").rng(),
        )?;
        Ok(ModelParams {
            dims,
            encoder,
            decoder,
            dec_input_proj,
            w_out,
            b_out: vec![0.0; dims.output_3d],
        })
    }

    /// Named parameter segments in flattening order.
    pub fn segments(dims: &ModelDims) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (side, input) in [("encoder", dims.input_2d), ("decoder", dims.output_3d)] {
            out.push((format!("{side}.w_x"), input * 4 * dims.hidden));
            out.push((format!("{side}.w_h"), dims.hidden * 4 * dims.hidden));
            out.push((format!("{side}.b"), 4 * dims.hidden));
            out.push((format!("{side}.ln_x_gain"), 4 * dims.hidden));
            out.push((format!("{side}.ln_x_bias"), 4 * dims.hidden));
            out.push((format!("{side}.ln_h_gain"), 4 * dims.hidden));
            out.push((format!("{side}.ln_h_bias"), 4 * dims.hidden));
            out.push((format!("{side}.ln_c_gain"), dims.hidden));
            out.push((format!("{side}.ln_c_bias"), dims.hidden));
        }
        if dims.input_proj {
            out.push(("dec_input_proj".into(), dims.output_3d * dims.output_3d));
        }
        out.push(("w_out".into(), dims.hidden * dims.output_3d));
        out.push(("b_out".into(), dims.output_3d));
        out
    }

    pub fn param_count(dims: &ModelDims) -> usize {
        Self::segments(dims).iter().map(|(_, n)| n).sum()
    }

    /// Name of the segment containing flat index `idx`.
    pub fn param_name_at(dims: &ModelDims, idx: usize) -> String {
        let mut offset = 0;
        for (name, len) in Self::segments(dims) {
            if idx < offset + len {
                return format!("{name}[{}]", idx - offset);
            }
            offset += len;
        }
        format!("<out of range {idx}>")
    }

    fn cell_slices(cell: &CellParams) -> [&[f64]; 9] {
        [
            cell.w_x.data(),
            cell.w_h.data(),
            &cell.b,
            &cell.ln_x_gain,
            &cell.ln_x_bias,
            &cell.ln_h_gain,
            &cell.ln_h_bias,
            &cell.ln_c_gain,
            &cell.ln_c_bias,
        ]
    }

    fn cell_slices_mut(cell: &mut CellParams) -> [&mut [f64]; 9] {
        [
            cell.w_x.data_mut(),
            cell.w_h.data_mut(),
            &mut cell.b,
            &mut cell.ln_x_gain,
            &mut cell.ln_x_bias,
            &mut cell.ln_h_gain,
            &mut cell.ln_h_bias,
            &mut cell.ln_c_gain,
            &mut cell.ln_c_bias,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::param_count(&self.dims));
        for slice in Self::cell_slices(&self.encoder) {
            out.extend_from_slice(slice);
        }
        for slice in Self::cell_slices(&self.decoder) {
            out.extend_from_slice(slice);
        }
        if let Some(p) = &self.dec_input_proj {
            out.extend_from_slice(p.data());
        }
        out.extend_from_slice(self.w_out.data());
        out.extend_from_slice(&self.b_out);
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != Self::param_count(&self.dims) {
            return Err(Error::dim_mismatch(
                "assign_from_flat",
                Self::param_count(&self.dims),
                flat.len(),
            ));
        }
        let mut cursor = 0;
        let take = |dst: &mut [f64], cursor: &mut usize| {
            dst.copy_from_slice(&flat[*cursor..*cursor + dst.len()]);
            *cursor += dst.len();
        };
        for slice in Self::cell_slices_mut(&mut self.encoder) {
            take(slice, &mut cursor);
        }
        for slice in Self::cell_slices_mut(&mut self.decoder) {
            take(slice, &mut cursor);
        }
        if let Some(p) = &mut self.dec_input_proj {
            take(p.data_mut(), &mut cursor);
        }
        take(self.w_out.data_mut(), &mut cursor);
        take(&mut self.b_out, &mut cursor);
        Ok(())
    }
}

/// Gradients for every parameter, in the same layout as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub dims: ModelDims,
    pub encoder: CellGrads,
    pub decoder: CellGrads,
    pub dec_input_proj: Option<Matrix>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros(dims: &ModelDims) -> ModelGrads {
        ModelGrads {
            dims: *dims,
            encoder: CellGrads::zeros(dims.input_2d, dims.hidden),
            decoder: CellGrads::zeros(dims.output_3d, dims.hidden),
            dec_input_proj: dims
                .input_proj
                .then(|| Matrix::zeros(dims.output_3d, dims.output_3d)),
            w_out: Matrix::zeros(dims.hidden, dims.output_3d),
            b_out: vec![0.0; dims.output_3d],
        }
    }

    fn cell_slices(cell: &CellGrads) -> [&[f64]; 9] {
        [
            cell.w_x.data(),
            cell.w_h.data(),
            &cell.b,
            &cell.ln_x_gain,
            &cell.ln_x_bias,
            &cell.ln_h_gain,
            &cell.ln_h_bias,
            &cell.ln_c_gain,
            &cell.ln_c_bias,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(ModelParams::param_count(&self.dims));
        for slice in Self::cell_slices(&self.encoder) {
            out.extend_from_slice(slice);
        }
        for slice in Self::cell_slices(&self.decoder) {
            out.extend_from_slice(slice);
        }
        if let Some(p) = &self.dec_input_proj {
            out.extend_from_slice(p.data());
        }
        out.extend_from_slice(self.w_out.data());
        out.extend_from_slice(&self.b_out);
        out
    }

    /// Global L2 norm over all gradient entries.
    pub fn global_norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Forward execution mode; training mode samples fresh dropout masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunMode {
    Train { dropout_p: f64 },
    Infer,
}

/// Per-timestep activations cached for backpropagation through time.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub encoder_caches: Vec<CellStepCache>,
    pub decoder_caches: Vec<CellStepCache>,
    /// Raw decoder inputs per step: the all-ones token, then each previous
    /// post-residual output.
    pub dec_inputs: Vec<Matrix>,
    pub predictions: Vec<Matrix>,
}

fn sample_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.gen::<f64>() < p { 0.0 } else { 1.0 };
    }
    m
}

/// Runs the network over a batch of normalized, time-reversed 2D windows
/// and returns the normalized 3D predictions (chronological order) plus the
/// tape for [`backward`]. Dropout draws from `rng` only in training mode
/// with `dropout_p > 0`.
pub fn forward(
    params: &ModelParams,
    batch: &SequenceBatch,
    mode: RunMode,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Matrix>, ForwardTape)> {
    let dims = &params.dims;
    let seq_len = batch.seq_len();
    if seq_len == 0 {
        return Err(Error::EmptyInput("forward: empty batch".into()));
    }
    if batch.input_dim() != dims.input_2d {
        return Err(Error::dim_mismatch(
            "forward input dim",
            dims.input_2d,
            batch.input_dim(),
        ));
    }
    let n = batch.batch_size();
    let dropout_p = match mode {
        RunMode::Train { dropout_p } => {
            if !(0.0..1.0).contains(&dropout_p) {
                return Err(Error::InvalidArgument(format!(
                    "dropout probability must be in [0, 1), got {dropout_p}"
                )));
            }
            dropout_p
        }
        RunMode::Infer => 0.0,
    };

    let mut h = Matrix::zeros(n, dims.hidden);
    let mut c = Matrix::zeros(n, dims.hidden);
    let mut encoder_caches = Vec::with_capacity(seq_len);
    for (t, x) in batch.inputs_2d.iter().enumerate() {
        let dropout = (dropout_p > 0.0)
            .then(|| (sample_mask(n, x.cols(), dropout_p, rng), dropout_p));
        let (h_new, c_new, cache) = cell_step(&params.encoder, x, &h, &c, dropout, dims.layer_norm)?;
        if !h_new.is_finite() || !c_new.is_finite() {
            return Err(Error::non_finite(format!("encoder state at timestep {t}")));
        }
        h = h_new;
        c = c_new;
        encoder_caches.push(cache);
    }

    let mut decoder_caches = Vec::with_capacity(seq_len);
    let mut dec_inputs = Vec::with_capacity(seq_len);
    let mut predictions = Vec::with_capacity(seq_len);
    let mut dec_in = Matrix::from_fn(n, dims.output_3d, |_, _| 1.0); // start token
    for t in 0..seq_len {
        let cell_in = match &params.dec_input_proj {
            Some(p) => dec_in.matmul(p)?,
            None => dec_in.clone(),
        };
        let dropout = (dropout_p > 0.0)
            .then(|| (sample_mask(n, cell_in.cols(), dropout_p, rng), dropout_p));
        let (h_new, c_new, cache) = cell_step(&params.decoder, &cell_in, &h, &c, dropout, dims.layer_norm)?;
        h = h_new;
        c = c_new;

        let mut out = h.matmul(&params.w_out)?;
        out.add_row_vector(&params.b_out)?;
        if dims.residual {
            out.add_assign(&dec_in)?;
        }
        if !out.is_finite() {
            return Err(Error::non_finite(format!("decoder output at timestep {t}")));
        }
        decoder_caches.push(cache);
        dec_inputs.push(dec_in);
        predictions.push(out.clone());
        dec_in = out;
    }

    let tape = ForwardTape {
        encoder_caches,
        decoder_caches,
        dec_inputs,
        predictions: predictions.clone(),
    };
    Ok((predictions, tape))
}

/// Exact backpropagation through time for [`forward`], including the
/// residual path (each output cotangent flows into the output projection,
/// into the previous step's output, and into the next cell input) and the
/// encoder-final-state handoff.
pub fn backward(
    params: &ModelParams,
    tape: &ForwardTape,
    d_predictions: &[Matrix],
) -> Result<ModelGrads> {
    let dims = &params.dims;
    let seq_len = tape.decoder_caches.len();
    if d_predictions.len() != seq_len {
        return Err(Error::dim_mismatch(
            "backward cotangents",
            seq_len,
            d_predictions.len(),
        ));
    }
    let n = tape.predictions[0].rows();
    for (t, d) in d_predictions.iter().enumerate() {
        if d.rows() != n || d.cols() != dims.output_3d {
            return Err(Error::dim_mismatch(
                format!("backward cotangent at timestep {t}"),
                format!("{}x{}", n, dims.output_3d),
                format!("{}x{}", d.rows(), d.cols()),
            ));
        }
    }

    let mut grads = ModelGrads::zeros(dims);
    let w_out_t = params.w_out.transpose();
    let proj_t = params.dec_input_proj.as_ref().map(|p| p.transpose());

    let mut d_h_next = Matrix::zeros(n, dims.hidden);
    let mut d_c_next = Matrix::zeros(n, dims.hidden);
    let mut d_carry = Matrix::zeros(n, dims.output_3d); // into o_t from step t+1
    for t in (0..seq_len).rev() {
        let mut d_out = d_predictions[t].clone();
        d_out.add_assign(&d_carry)?;

        // out = [dec_in +] h W_out + b_out
        grads
            .w_out
            .add_assign(&tape.decoder_caches[t].h.transpose().matmul(&d_out)?)?;
        for (slot, v) in grads.b_out.iter_mut().zip(d_out.column_sums()) {
            *slot += v;
        }
        let mut d_h = d_out.matmul(&w_out_t)?;
        d_h.add_assign(&d_h_next)?;

        let (d_cell_in, d_h_prev, d_c_prev) = cell_backward(
            &params.decoder,
            &tape.decoder_caches[t],
            &d_h,
            &d_c_next,
            dims.layer_norm,
            &mut grads.decoder,
        )?;

        // Cotangent of the raw fed-back input: through the optional
        // projection plus (with residual) the identity path from the output.
        let mut d_dec_in = match (&proj_t, &params.dec_input_proj) {
            (Some(pt), Some(_)) => {
                let g = grads.dec_input_proj.as_mut().expect("proj grads allocated");
                g.add_assign(&tape.dec_inputs[t].transpose().matmul(&d_cell_in)?)?;
                d_cell_in.matmul(pt)?
            }
            _ => d_cell_in,
        };
        if dims.residual {
            d_dec_in.add_assign(&d_out)?;
        }

        d_carry = d_dec_in; // for t == 0 this lands on the constant token and is dropped
        d_h_next = d_h_prev;
        d_c_next = d_c_prev;
    }

    for t in (0..tape.encoder_caches.len()).rev() {
        let (_, d_h_prev, d_c_prev) = cell_backward(
            &params.encoder,
            &tape.encoder_caches[t],
            &d_h_next,
            &d_c_next,
            dims.layer_norm,
            &mut grads.encoder,
        )?;
        d_h_next = d_h_prev;
        d_c_next = d_c_prev;
    }

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{BatchMeta, SequenceBatch};

    pub(crate) fn toy_batch(n: usize, seq_len: usize, input_2d: usize, output_3d: usize, seed: u64) -> SequenceBatch {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(21);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        SequenceBatch {
            inputs_2d: (0..seq_len)
                .map(|_| Matrix::from_fn(n, input_2d, |_, _| next()))
                .collect(),
            targets_3d: (0..seq_len)
                .map(|_| Matrix::from_fn(n, output_3d, |_, _| next()))
                .collect(),
            meta: (0..n)
                .map(|i| BatchMeta {
                    subject: format!("S{i}"),
                    action: "a".into(),
                    seq_index: i,
                    start: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn zero_output_projection_passes_start_token_through() {
        let dims = ModelDims::new(6, 9, 5, 4);
        let key = StreamKey::from_seed(3);
        let mut params = ModelParams::init(dims, &key).unwrap();
        params.w_out = Matrix::zeros(dims.hidden, dims.output_3d);
        params.b_out = vec![0.0; dims.output_3d];

        let batch = toy_batch(2, 4, 6, 9, 1);
        let mut rng = key.child("fwd").rng();
        let (pred, _) = forward(&params, &batch, RunMode::Infer, &mut rng).unwrap();
        for step in &pred {
            for &v in step.data() {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn without_residual_zero_projection_gives_zeros() {
        let mut dims = ModelDims::new(6, 9, 5, 4);
        dims.residual = false;
        let key = StreamKey::from_seed(3);
        let mut params = ModelParams::init(dims, &key).unwrap();
        params.w_out = Matrix::zeros(dims.hidden, dims.output_3d);
        params.b_out = vec![0.0; dims.output_3d];

        let batch = toy_batch(2, 4, 6, 9, 1);
        let mut rng = key.child("fwd").rng();
        let (pred, _) = forward(&params, &batch, RunMode::Infer, &mut rng).unwrap();
        for step in &pred {
            for &v in step.data() {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn single_step_prediction_is_token_plus_projection() {
        let dims = ModelDims::new(4, 6, 3, 1);
        let key = StreamKey::from_seed(8);
        let params = ModelParams::init(dims, &key).unwrap();
        let batch = toy_batch(1, 1, 4, 6, 5);
        let mut rng = key.child("fwd").rng();
        let (pred, tape) = forward(&params, &batch, RunMode::Infer, &mut rng).unwrap();
        assert_eq!(pred.len(), 1);

        let h = &tape.decoder_caches[0].h;
        let mut expect = h.matmul(&params.w_out).unwrap();
        expect.add_row_vector(&params.b_out).unwrap();
        for (got, exp) in pred[0].data().iter().zip(expect.data()) {
            assert!((got - (1.0 + exp)).abs() < 1e-15);
        }
    }

    #[test]
    fn train_mode_without_dropout_equals_infer() {
        let dims = ModelDims::new(6, 9, 5, 3);
        let key = StreamKey::from_seed(12);
        let params = ModelParams::init(dims, &key).unwrap();
        let batch = toy_batch(3, 3, 6, 9, 2);
        let mut rng_a = key.child("a").rng();
        let mut rng_b = key.child("b").rng();
        let (pred_train, _) =
            forward(&params, &batch, RunMode::Train { dropout_p: 0.0 }, &mut rng_a).unwrap();
        let (pred_infer, _) = forward(&params, &batch, RunMode::Infer, &mut rng_b).unwrap();
        for (a, b) in pred_train.iter().zip(&pred_infer) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn inference_independent_of_batch_composition() {
        let dims = ModelDims::new(6, 9, 5, 4);
        let key = StreamKey::from_seed(21);
        let params = ModelParams::init(dims, &key).unwrap();
        let batch = toy_batch(4, 4, 6, 9, 3);

        let mut rng = key.child("x").rng();
        let (all_pred, _) = forward(&params, &batch, RunMode::Infer, &mut rng).unwrap();

        // Run row 2 alone and compare bit-for-bit.
        let solo = SequenceBatch {
            inputs_2d: batch
                .inputs_2d
                .iter()
                .map(|m| {
                    let mut s = Matrix::zeros(1, m.cols());
                    s.row_mut(0).copy_from_slice(m.row(2));
                    s
                })
                .collect(),
            targets_3d: Vec::new(),
            meta: vec![batch.meta[2].clone()],
        };
        let (solo_pred, _) = forward(&params, &solo, RunMode::Infer, &mut rng).unwrap();
        for (full, alone) in all_pred.iter().zip(&solo_pred) {
            assert_eq!(full.row(2), alone.row(0));
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let dims = ModelDims::new(4, 6, 3, 2);
        let key = StreamKey::from_seed(31);
        let params = ModelParams::init(dims, &key).unwrap();
        let batch = toy_batch(2, 2, 4, 6, 7);
        let mut rng = key.child("fwd").rng();
        let (pred, tape) = forward(&params, &batch, RunMode::Infer, &mut rng).unwrap();
        let zeros: Vec<Matrix> = pred.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let grads = backward(&params, &tape, &zeros).unwrap();
        for v in grads.flatten() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let dims = ModelDims {
            input_proj: true,
            ..ModelDims::new(4, 6, 3, 2)
        };
        let key = StreamKey::from_seed(77);
        let params = ModelParams::init(dims, &key).unwrap();
        let flat = params.flatten();
        assert_eq!(flat.len(), ModelParams::param_count(&dims));
        let mut other = ModelParams::init(dims, &StreamKey::from_seed(78)).unwrap();
        other.assign_from_flat(&flat).unwrap();
        assert_eq!(params, other);
    }

    #[test]
    fn param_names_resolve() {
        let dims = ModelDims::new(4, 6, 3, 2);
        assert!(ModelParams::param_name_at(&dims, 0).starts_with("encoder.w_x"));
        let count = ModelParams::param_count(&dims);
        assert!(ModelParams::param_name_at(&dims, count - 1).starts_with("b_out"));
    }
}
