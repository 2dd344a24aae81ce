//! Evaluation: per-joint position error under the no-alignment and
//! similarity-aligned protocols, per-action aggregation, sliding-window
//! inference over long sequences, temporal-filter baselines, and the
//! noise-robustness sweep.

pub mod filters;
pub mod procrustes;

pub use filters::{filter_baseline, FilterKind};
pub use procrustes::{procrustes_align, SimilarityTransform};

use crate::error::{Error, Result};
use crate::model::{forward, Checkpoint, ModelParams, RunMode};
use crate::numeric::StreamKey;
use crate::pipeline::{
    assemble_reversed_inputs, prepare_sequences, NoiseParams, NormStats, PoseSequence,
    PreparedSequence, SequenceBatch,
};
use serde::Serialize;
use std::collections::BTreeMap;

/// Which error protocol a report was computed under: 1 compares poses as
/// predicted, 2 similarity-aligns each predicted pose to its ground truth
/// first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Protocol {
    NoAlignment = 1,
    SimilarityAligned = 2,
}

impl Protocol {
    pub fn from_number(n: u8) -> Result<Protocol> {
        match n {
            1 => Ok(Protocol::NoAlignment),
            2 => Ok(Protocol::SimilarityAligned),
            other => Err(Error::InvalidArgument(format!(
                "protocol must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            Protocol::NoAlignment => 1,
            Protocol::SimilarityAligned => 2,
        }
    }
}

/// Mean per-joint position error in millimeters between two root-relative
/// 3D poses: the mean over joints of the Euclidean distance.
pub fn mpjpe(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dim_mismatch("mpjpe", gt.len(), pred.len()));
    }
    if pred.is_empty() || pred.len() % 3 != 0 {
        return Err(Error::InvalidArgument(format!(
            "mpjpe needs a non-empty multiple of 3 coordinates, got {}",
            pred.len()
        )));
    }
    let n = pred.len() / 3;
    let mut acc = 0.0;
    for j in 0..n {
        let mut d2 = 0.0;
        for k in 0..3 {
            let d = pred[j * 3 + k] - gt[j * 3 + k];
            d2 += d * d;
        }
        acc += d2.sqrt();
    }
    Ok(acc / n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionStats {
    pub frames: usize,
    pub mean_error_mm: f64,
}

/// Per-action and aggregate error table. `overall_frame_weighted_mm`
/// weights every frame equally; `overall_action_mean_mm` averages the
/// per-action means (both are emitted since published tables are ambiguous
/// about which they use).
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub protocol: u8,
    pub per_action: BTreeMap<String, ActionStats>,
    pub overall_frame_weighted_mm: f64,
    pub overall_action_mean_mm: f64,
    pub n_frames: usize,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("action,protocol,frames,error_mm\n");
        for (action, stats) in &self.per_action {
            out.push_str(&format!(
                "{action},{},{},{}\n",
                self.protocol, stats.frames, stats.mean_error_mm
            ));
        }
        out.push_str(&format!(
            "OVERALL_FRAME_WEIGHTED,{},{},{}\n",
            self.protocol, self.n_frames, self.overall_frame_weighted_mm
        ));
        out.push_str(&format!(
            "OVERALL_ACTION_MEAN,{},{},{}\n",
            self.protocol, self.n_frames, self.overall_action_mean_mm
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One evaluated sequence: predicted and ground-truth root-relative 3D
/// frames in millimeters.
pub struct EvalItem<'a> {
    pub action: &'a str,
    pub pred: &'a [Vec<f64>],
    pub gt: &'a [Vec<f64>],
}

/// Scores prediction/ground-truth pairs under a protocol and aggregates
/// per action. Frames are weighted equally within and across actions for
/// the frame-weighted overall figure.
pub fn report_from_predictions(
    items: &[EvalItem<'_>],
    protocol: Protocol,
    fingerprint: &str,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput("report_from_predictions".into()));
    }
    let mut sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for item in items {
        if item.pred.len() != item.gt.len() {
            return Err(Error::dim_mismatch(
                "report frames",
                item.gt.len(),
                item.pred.len(),
            ));
        }
        let entry = sums.entry(item.action.to_string()).or_insert((0, 0.0));
        for (p, g) in item.pred.iter().zip(item.gt) {
            let err = match protocol {
                Protocol::NoAlignment => mpjpe(p, g)?,
                Protocol::SimilarityAligned => {
                    let (aligned, _) = procrustes_align(p, g)?;
                    mpjpe(&aligned, g)?
                }
            };
            entry.0 += 1;
            entry.1 += err;
        }
    }

    let mut per_action = BTreeMap::new();
    let mut total_frames = 0usize;
    let mut total_err = 0.0;
    let mut action_mean_acc = 0.0;
    for (action, (frames, err)) in &sums {
        let mean = err / *frames as f64;
        per_action.insert(
            action.clone(),
            ActionStats {
                frames: *frames,
                mean_error_mm: mean,
            },
        );
        total_frames += frames;
        total_err += err;
        action_mean_acc += mean;
    }
    Ok(EvalReport {
        protocol: protocol.number(),
        per_action,
        overall_frame_weighted_mm: total_err / total_frames as f64,
        overall_action_mean_mm: action_mean_acc / sums.len() as f64,
        n_frames: total_frames,
        fingerprint: fingerprint.to_string(),
    })
}

/// Lifts a root-centered, unnormalized 2D sequence of length `L >= T` to
/// `L` root-relative 3D frames in millimeters.
///
/// Frames `0..T` come from the first window's decoder outputs; every later
/// frame `t` is the last decoder output of the window ending at `t`, i.e.
/// prediction uses only the trailing `T` frames of 2D input.
pub fn sliding_infer(
    params: &ModelParams,
    stats_2d: &NormStats,
    stats_3d: &NormStats,
    frames_2d: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let seq_len = params.dims.train_seq_len;
    let total = frames_2d.len();
    if total < seq_len {
        return Err(Error::InvalidArgument(format!(
            "sliding_infer needs at least {seq_len} frames, got {total}"
        )));
    }

    let n_windows = total - seq_len + 1;
    let windows: Vec<&[Vec<f64>]> = (0..n_windows)
        .map(|s| &frames_2d[s..s + seq_len])
        .collect();

    // Row-wise processing is batch-independent, so chunking is free.
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut rng = StreamKey::from_seed(0).rng(); // never drawn from in infer mode
    const CHUNK: usize = 256;
    for (chunk_idx, chunk) in windows.chunks(CHUNK).enumerate() {
        let inputs = assemble_reversed_inputs(chunk, stats_2d)?;
        let batch = SequenceBatch {
            inputs_2d: inputs,
            targets_3d: Vec::new(),
            meta: Vec::new(),
        };
        let (pred, _) = forward(params, &batch, RunMode::Infer, &mut rng)?;
        for row in 0..chunk.len() {
            let window_start = chunk_idx * CHUNK + row;
            if window_start == 0 {
                for step in &pred {
                    out.push(stats_3d.denormalize(step.row(0))?);
                }
            } else {
                out.push(stats_3d.denormalize(pred[seq_len - 1].row(row))?);
            }
        }
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

fn worker_count(n_items: usize) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("POSELIFT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(hw);
    cap.min(n_items).max(1)
}

/// Maps `f` over items on up to `POSELIFT_THREADS` workers, collecting
/// results in input order so aggregation stays deterministic.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = worker_count(items.len());
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let mut results: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for (slot_chunk, item_chunk) in results.chunks_mut(chunk).zip(items.chunks(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, item) in slot_chunk.iter_mut().zip(item_chunk) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

/// Sequences prepared for evaluation, with too-short ones dropped.
fn eval_ready(
    ckpt: &Checkpoint,
    dataset: &[PoseSequence],
    noise: Option<NoiseParams>,
) -> Result<Vec<PreparedSequence>> {
    let prepared = prepare_sequences(dataset, &ckpt.skeleton, noise)?;
    let seq_len = ckpt.params.dims.train_seq_len;
    let mut kept = Vec::new();
    for seq in prepared {
        if seq.frames_3d.is_none() {
            return Err(Error::InvalidArgument(format!(
                "sequence {}/{} has no 3D ground truth to evaluate against",
                seq.subject, seq.action
            )));
        }
        if seq.len() < seq_len {
            log::warn!(
                "skipping sequence {}/{} with {} frames (< window length {seq_len})",
                seq.subject,
                seq.action,
                seq.len()
            );
            continue;
        }
        kept.push(seq);
    }
    if kept.is_empty() {
        return Err(Error::EmptyInput("evaluate: no usable sequences".into()));
    }
    Ok(kept)
}

fn evaluate_with_noise(
    ckpt: &Checkpoint,
    dataset: &[PoseSequence],
    protocol: Protocol,
    noise: Option<NoiseParams>,
) -> Result<EvalReport> {
    let prepared = eval_ready(ckpt, dataset, noise)?;
    let lifted: Vec<Result<Vec<Vec<f64>>>> = par_map(&prepared, |seq| {
        sliding_infer(&ckpt.params, &ckpt.stats_2d, &ckpt.stats_3d, &seq.frames_2d)
    });
    let mut preds = Vec::with_capacity(lifted.len());
    for p in lifted {
        preds.push(p?);
    }
    let items: Vec<EvalItem<'_>> = prepared
        .iter()
        .zip(&preds)
        .map(|(seq, pred)| EvalItem {
            action: &seq.action,
            pred,
            gt: seq.frames_3d.as_ref().expect("checked above"),
        })
        .collect();
    let dims = &ckpt.params.dims;
    let fingerprint = format!(
        "joints={} hidden={} seq_len={} sequences={} sigma={}",
        ckpt.skeleton.n_joints(),
        dims.hidden,
        dims.train_seq_len,
        prepared.len(),
        noise.map_or(0.0, |n| n.sigma),
    );
    report_from_predictions(&items, protocol, &fingerprint)
}

/// Runs sliding-window inference over every sequence and scores it under
/// the requested protocol.
pub fn evaluate(
    ckpt: &Checkpoint,
    dataset: &[PoseSequence],
    protocol: Protocol,
) -> Result<EvalReport> {
    evaluate_with_noise(ckpt, dataset, protocol, None)
}

/// Noise-robustness sweep: corrupts the raw 2D detections with each sigma
/// (pixels) before normalization and reports the similarity-aligned error.
pub fn noise_sweep(
    ckpt: &Checkpoint,
    dataset: &[PoseSequence],
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, EvalReport)>> {
    let mut out = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let noise = (sigma > 0.0).then_some(NoiseParams { sigma, seed });
        let report =
            evaluate_with_noise(ckpt, dataset, Protocol::SimilarityAligned, noise)?;
        out.push((sigma, report));
    }
    Ok(out)
}
