//! Deterministic training loop: pipeline -> model -> loss -> Adam with an
//! exponentially decayed learning rate, global-norm gradient clipping,
//! seeded shuffling, CSV metrics, and step-stamped checkpoints with
//! bit-exact resume.

use crate::error::{Error, Result};
use crate::evaluator::mpjpe;
use crate::loss::{total_loss, total_loss_grad, LossWeights};
use crate::model::{
    backward, forward, load_checkpoint, save_checkpoint, Checkpoint, ModelDims, ModelParams,
    RunMode,
};
use crate::numeric::{adam_step, AdamState, StreamKey};
use crate::pipeline::{
    assemble_batch, fit_norm, make_windows, prepare_sequences, NormStats, PoseSequence,
    PreparedSequence, Window,
};
use crate::skeleton::SkeletonSpec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Training hyperparameters. Defaults follow the reference setup: 100
/// epochs, batches of 32 windows of 5 frames, Adam at 1e-5 with
/// per-iteration exponential decay, dropout 0.5, hidden size 1024.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub lr0: f64,
    pub lr_decay_gamma: f64,
    pub dropout_p: f64,
    pub hidden: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Global-norm gradient clip; guards rare LSTM spikes.
    pub grad_clip: f64,
    /// Extra checkpoint every this many steps (0 = final only).
    pub checkpoint_every: usize,
    /// Architecture switches for the ablation harness.
    pub residual: bool,
    pub layer_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            seq_len: 5,
            lr0: 1e-5,
            lr_decay_gamma: 0.99999,
            dropout_p: 0.5,
            hidden: 1024,
            loss_weights: LossWeights::default(),
            seed: 0,
            grad_clip: 5.0,
            checkpoint_every: 0,
            residual: true,
            layer_norm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if self.seq_len == 0 {
            problems.push("seq_len must be >= 1".into());
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            problems.push(format!("lr0 must be finite and >= 0, got {}", self.lr0));
        }
        if !(self.lr_decay_gamma > 0.0 && self.lr_decay_gamma <= 1.0) {
            problems.push(format!(
                "lr_decay_gamma must be in (0, 1], got {}",
                self.lr_decay_gamma
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            problems.push(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            ));
        }
        if self.hidden < 2 {
            problems.push("hidden must be >= 2".into());
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            problems.push(format!(
                "grad_clip must be finite and >= 0, got {}",
                self.grad_clip
            ));
        }
        if let Err(e) = self.loss_weights.validate() {
            problems.push(e.to_string());
        }
        problems
    }
}

/// Learning rate at an iteration: `lr0 * gamma^iteration`.
pub fn lr_at(iteration: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay_gamma.powf(iteration as f64)
}

/// Components the ablation harness can disable (all enabled = the full
/// model).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationToggles {
    pub residual: bool,
    pub layer_norm: bool,
    pub recurrent_dropout: bool,
    pub smoothness_term: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        AblationToggles {
            residual: true,
            layer_norm: true,
            recurrent_dropout: true,
            smoothness_term: true,
        }
    }
}

/// Result summary of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub steps: u64,
    pub first_epoch_mean_loss: f64,
    pub last_epoch_mean_loss: f64,
    pub final_val_mpjpe_mm: Option<f64>,
}

struct SplitData {
    train: Vec<PreparedSequence>,
    val: Vec<PreparedSequence>,
}

/// Holds out ~10% for validation: whole subjects when several are present,
/// otherwise a seeded 10% of sequences.
fn split_train_val(prepared: Vec<PreparedSequence>, key: &StreamKey) -> SplitData {
    let subjects: BTreeSet<String> = prepared.iter().map(|s| s.subject.clone()).collect();
    let mut rng = key.child("val_split").rng();
    if subjects.len() >= 2 {
        let mut subject_list: Vec<String> = subjects.into_iter().collect();
        subject_list.shuffle(&mut rng);
        let total = prepared.len();
        let mut held = BTreeSet::new();
        let mut held_count = 0usize;
        for s in &subject_list {
            if held.len() + 1 == subject_list.len() {
                break; // always keep at least one training subject
            }
            if held_count * 10 >= total {
                break;
            }
            held_count += prepared.iter().filter(|p| &p.subject == s).count();
            held.insert(s.clone());
        }
        let (val, train): (Vec<_>, Vec<_>) =
            prepared.into_iter().partition(|p| held.contains(&p.subject));
        SplitData { train, val }
    } else {
        let mut indices: Vec<usize> = (0..prepared.len()).collect();
        indices.shuffle(&mut rng);
        let n_val = if prepared.len() >= 2 { (prepared.len() / 10).max(1) } else { 0 };
        let val_set: BTreeSet<usize> = indices.into_iter().take(n_val).collect();
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, p) in prepared.into_iter().enumerate() {
            if val_set.contains(&i) {
                val.push(p);
            } else {
                train.push(p);
            }
        }
        SplitData { train, val }
    }
}

fn windows_of(sequences: &[PreparedSequence], seq_len: usize) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for (i, seq) in sequences.iter().enumerate() {
        let frames_3d = match &seq.frames_3d {
            Some(f) => f,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "sequence {}/{} has no 3D ground truth for training",
                    seq.subject, seq.action
                )))
            }
        };
        if seq.len() < seq_len {
            log::warn!(
                "skipping sequence {}/{} with {} frames (< window length {seq_len})",
                seq.subject,
                seq.action,
                seq.len()
            );
            continue;
        }
        out.extend(make_windows(
            &seq.frames_2d,
            frames_3d,
            seq_len,
            &seq.subject,
            &seq.action,
            i,
        )?);
    }
    Ok(out)
}

/// Mean validation error (mm) over all frames of the validation windows.
fn validation_mpjpe(
    params: &ModelParams,
    stats_2d: &NormStats,
    stats_3d: &NormStats,
    val_windows: &[Window],
    batch_size: usize,
) -> Result<Option<f64>> {
    if val_windows.is_empty() {
        return Ok(None);
    }
    let mut rng = StreamKey::from_seed(0).rng(); // inference only
    let mut acc = 0.0;
    let mut count = 0usize;
    for chunk in val_windows.chunks(batch_size) {
        let refs: Vec<&Window> = chunk.iter().collect();
        let batch = assemble_batch(&refs, stats_2d, stats_3d)?;
        let (pred, _) = forward(params, &batch, RunMode::Infer, &mut rng)?;
        for (t, step) in pred.iter().enumerate() {
            for (row, w) in chunk.iter().enumerate() {
                let denorm = stats_3d.denormalize(step.row(row))?;
                acc += mpjpe(&denorm, &w.frames_3d[t])?;
                count += 1;
            }
        }
    }
    Ok(Some(acc / count as f64))
}

fn format_metric(v: f64) -> String {
    format!("{v}")
}

/// Trains on the dataset and writes metrics plus checkpoints under
/// `out_dir`. Fully deterministic for a given `(config, dataset)`:
/// shuffling, dropout, and initialization each draw from labeled streams of
/// the run seed, keyed by epoch/step, which is also what makes
/// `resume_from` bit-exact — a run resumed from a checkpoint finishes with
/// the same bytes as one that never stopped.
pub fn train(
    cfg: &TrainConfig,
    dataset: &[PoseSequence],
    spec: &SkeletonSpec,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<TrainOutcome> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    std::fs::create_dir_all(out_dir)?;
    let key = StreamKey::from_seed(cfg.seed);

    let prepared = prepare_sequences(dataset, spec, None)?;
    let prepared: Vec<PreparedSequence> = prepared
        .into_iter()
        .filter(|p| p.frames_3d.is_some())
        .collect();
    if prepared.is_empty() {
        return Err(Error::EmptyInput("train: no sequences with 3D ground truth".into()));
    }
    let split = split_train_val(prepared, &key);
    let train_windows = windows_of(&split.train, cfg.seq_len)?;
    let val_windows = windows_of(&split.val, cfg.seq_len)?;
    if train_windows.is_empty() {
        return Err(Error::EmptyInput("train: no training windows".into()));
    }

    let input_2d = (spec.n_joints() - 1) * 2;
    let output_3d = (spec.n_joints() - 1) * 3;
    let dims = ModelDims {
        input_2d,
        output_3d,
        hidden: cfg.hidden,
        train_seq_len: cfg.seq_len,
        residual: cfg.residual,
        layer_norm: cfg.layer_norm,
        input_proj: false,
    };

    // Parameters, optimizer state, and stats: fresh or from the resume
    // checkpoint. Stats always describe the training split; a resumed run
    // reuses the frozen ones.
    let (mut params, mut adam, stats_2d, stats_3d, start_step) = match resume_from {
        None => {
            let (f2, f3) = crate::pipeline::collect_frames(&split.train);
            let stats_2d = fit_norm(&f2)?;
            let stats_3d = fit_norm(&f3)?;
            let params = ModelParams::init(dims, &key.child("init"))?;
            let adam = AdamState::new(ModelParams::param_count(&dims));
            (params, adam, stats_2d, stats_3d, 0u64)
        }
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            ckpt.validate_skeleton(spec)?;
            if ckpt.params.dims != dims {
                return Err(Error::Checkpoint(format!(
                    "checkpoint dims {:?} do not match config dims {:?}",
                    ckpt.params.dims, dims
                )));
            }
            let start = ckpt.adam.step_count;
            (ckpt.params, ckpt.adam, ckpt.stats_2d, ckpt.stats_3d, start)
        }
    };

    let steps_per_epoch = train_windows.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    if start_step > total_steps {
        return Err(Error::Checkpoint(format!(
            "checkpoint is already at step {start_step}, beyond the configured {total_steps}"
        )));
    }

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(metrics, "step,epoch,lr,train_loss,val_mpjpe_mm")?;

    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut shuffled_epoch = u64::MAX;
    let mut epoch_loss_sum = 0.0;
    let mut epoch_loss_count = 0u64;
    let mut first_epoch_mean = f64::NAN;
    let mut last_epoch_mean = f64::NAN;
    let mut final_val = None;

    let mut flat_params = params.flatten();
    for step in start_step..total_steps {
        let epoch = step / steps_per_epoch;
        let pos = (step % steps_per_epoch) as usize;
        if epoch != shuffled_epoch {
            order = (0..train_windows.len()).collect();
            order.shuffle(&mut key.child_index("shuffle", epoch).rng());
            shuffled_epoch = epoch;
            epoch_loss_sum = 0.0;
            epoch_loss_count = 0;
        }

        let lo = pos * cfg.batch_size;
        let hi = (lo + cfg.batch_size).min(train_windows.len());
        let batch_refs: Vec<&Window> = order[lo..hi].iter().map(|&i| &train_windows[i]).collect();
        let batch = assemble_batch(&batch_refs, &stats_2d, &stats_3d)?;

        let mut dropout_rng = key.child_index("dropout", step).rng();
        let (pred, tape) = forward(
            &params,
            &batch,
            RunMode::Train {
                dropout_p: cfg.dropout_p,
            },
            &mut dropout_rng,
        )?;
        let loss = total_loss(&pred, &batch.targets_3d, spec, &cfg.loss_weights)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step: step + 1,
                msg: format!("training loss became {loss}"),
            });
        }
        let d_pred = total_loss_grad(&pred, &batch.targets_3d, spec, &cfg.loss_weights)?;
        let grads = backward(&params, &tape, &d_pred)?;

        let mut flat_grads = grads.flatten();
        if let Some(i) = flat_grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step: step + 1,
                msg: format!(
                    "non-finite gradient in {}",
                    ModelParams::param_name_at(&dims, i)
                ),
            });
        }
        if cfg.grad_clip > 0.0 {
            let norm = flat_grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.grad_clip {
                let scale = cfg.grad_clip / norm;
                for g in &mut flat_grads {
                    *g *= scale;
                }
            }
        }

        adam_step(&mut flat_params, &flat_grads, &mut adam, lr_at(step, cfg))?;
        params.assign_from_flat(&flat_params)?;

        epoch_loss_sum += loss;
        epoch_loss_count += 1;

        let epoch_done = pos as u64 == steps_per_epoch - 1;
        let mut val_field = String::new();
        if epoch_done {
            let mean = epoch_loss_sum / epoch_loss_count as f64;
            if epoch == 0 {
                first_epoch_mean = mean;
            }
            last_epoch_mean = mean;
            let val =
                validation_mpjpe(&params, &stats_2d, &stats_3d, &val_windows, cfg.batch_size)?;
            if let Some(v) = val {
                val_field = format_metric(v);
                final_val = Some(v);
            }
        }
        writeln!(
            metrics,
            "{},{},{},{},{}",
            step + 1,
            epoch,
            format_metric(lr_at(step, cfg)),
            format_metric(loss),
            val_field
        )?;

        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every as u64 == 0 {
            let ckpt = Checkpoint {
                params: params.clone(),
                adam: adam.clone(),
                stats_2d: stats_2d.clone(),
                stats_3d: stats_3d.clone(),
                skeleton: spec.clone(),
            };
            let path = out_dir.join(format!("ckpt_step{:08}.plft", step + 1));
            save_checkpoint(&ckpt, &path)?;
            std::fs::copy(&path, out_dir.join("latest.plft"))?;
        }
    }
    metrics.flush()?;

    let ckpt = Checkpoint {
        params,
        adam,
        stats_2d,
        stats_3d,
        skeleton: spec.clone(),
    };
    let final_path = out_dir.join(format!("ckpt_step{total_steps:08}.plft"));
    save_checkpoint(&ckpt, &final_path)?;
    let latest = out_dir.join("latest.plft");
    std::fs::copy(&final_path, &latest)?;

    Ok(TrainOutcome {
        checkpoint_path: latest,
        metrics_path,
        steps: total_steps,
        first_epoch_mean_loss: first_epoch_mean,
        last_epoch_mean_loss: last_epoch_mean,
        final_val_mpjpe_mm: final_val,
    })
}

/// Runs [`train`] with the named components disabled: no residual makes
/// decoder outputs pure projections, no layer norm turns the norms into
/// identity maps, no recurrent dropout forces p = 0, and no smoothness term
/// zeroes its loss weight.
pub fn ablation_run(
    cfg: &TrainConfig,
    toggles: &AblationToggles,
    dataset: &[PoseSequence],
    spec: &SkeletonSpec,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let mut cfg = cfg.clone();
    cfg.residual = toggles.residual;
    cfg.layer_norm = toggles.layer_norm;
    if !toggles.recurrent_dropout {
        cfg.dropout_p = 0.0;
    }
    if !toggles.smoothness_term {
        cfg.loss_weights.smoothness = 0.0;
    }
    train(&cfg, dataset, spec, out_dir, None)
}
