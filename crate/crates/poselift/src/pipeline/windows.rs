use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::pipeline::NormStats;

/// A training window: `seq_len` aligned 2D/3D frames in chronological
/// order, root-centered but not yet normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub frames_2d: Vec<Vec<f64>>,
    pub frames_3d: Vec<Vec<f64>>,
    pub subject: String,
    pub action: String,
    pub seq_index: usize,
    pub start: usize,
}

/// Per-sequence labels carried through a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeta {
    pub subject: String,
    pub action: String,
    pub seq_index: usize,
    pub start: usize,
}

/// A batch ready for the network: `inputs_2d[k]` holds the normalized 2D
/// frames at reversed time position `k` (so index 0 is the LAST frame of
/// each window), while `targets_3d` stays in chronological order. Both are
/// lists of `seq_len` matrices of shape `batch x dim`.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub inputs_2d: Vec<Matrix>,
    pub targets_3d: Vec<Matrix>,
    pub meta: Vec<BatchMeta>,
}

impl SequenceBatch {
    pub fn batch_size(&self) -> usize {
        self.inputs_2d.first().map_or(0, |m| m.rows())
    }

    pub fn seq_len(&self) -> usize {
        self.inputs_2d.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs_2d.first().map_or(0, |m| m.cols())
    }
}

/// Cuts a stride-1 sliding window of length `seq_len` over an aligned
/// (2D, 3D) frame pair, producing exactly `len - seq_len + 1` windows.
pub fn make_windows(
    frames_2d: &[Vec<f64>],
    frames_3d: &[Vec<f64>],
    seq_len: usize,
    subject: &str,
    action: &str,
    seq_index: usize,
) -> Result<Vec<Window>> {
    if seq_len == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    if frames_2d.len() != frames_3d.len() {
        return Err(Error::dim_mismatch(
            "make_windows frame counts",
            frames_2d.len(),
            frames_3d.len(),
        ));
    }
    if frames_2d.len() < seq_len {
        return Err(Error::InvalidArgument(format!(
            "sequence of length {} is shorter than window length {}",
            frames_2d.len(),
            seq_len
        )));
    }
    let mut out = Vec::with_capacity(frames_2d.len() - seq_len + 1);
    for start in 0..=(frames_2d.len() - seq_len) {
        out.push(Window {
            frames_2d: frames_2d[start..start + seq_len].to_vec(),
            frames_3d: frames_3d[start..start + seq_len].to_vec(),
            subject: subject.to_string(),
            action: action.to_string(),
            seq_index,
            start,
        });
    }
    Ok(out)
}

/// Normalizes the windows and packs them into a batch. 2D inputs are
/// reversed along time for the encoder; 3D targets keep chronological
/// order.
pub fn assemble_batch(
    windows: &[&Window],
    stats_2d: &NormStats,
    stats_3d: &NormStats,
) -> Result<SequenceBatch> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("assemble_batch".into()));
    }
    let seq_len = windows[0].frames_2d.len();
    for w in windows {
        if w.frames_2d.len() != seq_len || w.frames_3d.len() != seq_len {
            return Err(Error::dim_mismatch(
                "assemble_batch window lengths",
                seq_len,
                format!("{}/{}", w.frames_2d.len(), w.frames_3d.len()),
            ));
        }
    }

    let inputs_2d = assemble_reversed_inputs(
        &windows.iter().map(|w| w.frames_2d.as_slice()).collect::<Vec<_>>(),
        stats_2d,
    )?;

    let dim_3d = windows[0].frames_3d[0].len();
    let mut targets_3d = Vec::with_capacity(seq_len);
    for t in 0..seq_len {
        let mut m = Matrix::zeros(windows.len(), dim_3d);
        for (n, w) in windows.iter().enumerate() {
            let normalized = stats_3d.normalize(&w.frames_3d[t])?;
            m.row_mut(n).copy_from_slice(&normalized);
        }
        targets_3d.push(m);
    }

    Ok(SequenceBatch {
        inputs_2d,
        targets_3d,
        meta: windows
            .iter()
            .map(|w| BatchMeta {
                subject: w.subject.clone(),
                action: w.action.clone(),
                seq_index: w.seq_index,
                start: w.start,
            })
            .collect(),
    })
}

/// Inference-side batch assembly: normalized, time-reversed 2D inputs only.
pub fn assemble_reversed_inputs(
    windows_2d: &[&[Vec<f64>]],
    stats_2d: &NormStats,
) -> Result<Vec<Matrix>> {
    if windows_2d.is_empty() {
        return Err(Error::EmptyInput("assemble_reversed_inputs".into()));
    }
    let seq_len = windows_2d[0].len();
    if seq_len == 0 {
        return Err(Error::EmptyInput("assemble_reversed_inputs window".into()));
    }
    for w in windows_2d {
        if w.len() != seq_len {
            return Err(Error::dim_mismatch("window lengths", seq_len, w.len()));
        }
    }
    let dim = windows_2d[0][0].len();
    let mut out = Vec::with_capacity(seq_len);
    for k in 0..seq_len {
        let t = seq_len - 1 - k; // reversed time
        let mut m = Matrix::zeros(windows_2d.len(), dim);
        for (n, w) in windows_2d.iter().enumerate() {
            let normalized = stats_2d.normalize(&w[t])?;
            m.row_mut(n).copy_from_slice(&normalized);
        }
        out.push(m);
    }
    Ok(out)
}
