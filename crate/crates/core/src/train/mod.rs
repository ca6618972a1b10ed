//! Segmentation training loop: adaptive-moment descent with the configured
//! momentum as the first-moment coefficient, step-decayed learning rate,
//! decoupled weight decay on conv weights, per-iteration history, and
//! resumable checkpoints.

use crate::ckpt;
use crate::dataio::SegSample;
use crate::error::{Error, Result};
use crate::loss::BalancedLoss;
use crate::nn::{AdamHyper, AdamState, Model};
use crate::plane::MaskPlane;
use crate::seg::{CrackNet, SegConfig};
use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Multiplicative step decay; 0.8 lowers the rate by 20% per step.
    pub decay_factor: f64,
    pub decay_every: u64,
    pub total_iters: u64,
    pub batch_size: usize,
    /// First-moment coefficient of the adaptive-moment update (the second
    /// moment is fixed at 0.999, epsilon at 1e-8).
    pub momentum: f64,
    /// Decoupled L2 on conv/linear weights; batch-norm scale/shift and
    /// biases are exempt.
    pub weight_decay: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 9e-5,
            decay_factor: 0.8,
            decay_every: 30_000,
            total_iters: 240_000,
            batch_size: 2,
            momentum: 0.8,
            weight_decay: 6e-4,
            seed: 0,
            checkpoint_every: 30_000,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule for the tiny model: the full schedule scaled by
    /// 1/120 (2e3 iterations, decay every 5e2), same lr/momentum/decay.
    pub fn desk_tiny() -> Self {
        TrainConfig {
            total_iters: 2_000,
            decay_every: 500,
            checkpoint_every: 500,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_lr <= 0.0
            || self.decay_every == 0
            || self.total_iters == 0
            || self.batch_size == 0
            || self.checkpoint_every == 0
        {
            return Err(Error::invalid("training config values must be positive"));
        }
        if !(0.0..1.0).contains(&self.decay_factor) || self.decay_factor <= 0.0 {
            return Err(Error::invalid("decay factor must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight decay must be nonnegative"));
        }
        Ok(())
    }
}

/// Piecewise-constant step decay, evaluated as the left-to-right product
/// base * factor * ... * factor so the early values match the hand
/// derivation bit for bit.
pub fn lr_at(iter: u64, config: &TrainConfig) -> f64 {
    let steps = iter / config.decay_every;
    let mut lr = config.base_lr;
    for _ in 0..steps {
        lr *= config.decay_factor;
    }
    lr
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: u64,
    pub loss: f64,
    pub lr: f64,
}

/// Write history as CSV `iter,loss,lr`.
pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut out = String::from("iter,loss,lr\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.iter, row.loss, row.lr));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Sample order as a pure function of (seed, position): each epoch is a
/// fresh shuffle keyed by the master seed and the epoch index, so a resumed
/// run replays the identical stream.
struct EpochShuffler {
    seed: u64,
    n: usize,
    epoch: u64,
    perm: Vec<usize>,
}

impl EpochShuffler {
    fn new(seed: u64, n: usize) -> Self {
        let mut s = EpochShuffler {
            seed,
            n,
            epoch: u64::MAX,
            perm: Vec::new(),
        };
        s.load_epoch(0);
        s
    }

    fn load_epoch(&mut self, epoch: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let mut perm: Vec<usize> = (0..self.n).collect();
        perm.shuffle(&mut rng);
        self.perm = perm;
        self.epoch = epoch;
    }

    fn index_at(&mut self, position: u64) -> usize {
        let epoch = position / self.n as u64;
        if epoch != self.epoch {
            self.load_epoch(epoch);
        }
        self.perm[(position % self.n as u64) as usize]
    }
}

#[derive(Serialize, Deserialize)]
struct SegHeader {
    kind: String,
    config: SegConfig,
    iter: u64,
    train_seed: u64,
}

/// A loaded segmentation checkpoint.
#[derive(Debug)]
pub struct SegCheckpoint {
    pub model: CrackNet,
    pub optimizer: Option<AdamState>,
    pub iter: u64,
    pub train_seed: u64,
    pub history: Vec<HistoryRow>,
}

pub fn save_seg_checkpoint(
    path: &Path,
    model: &mut CrackNet,
    optimizer: Option<&AdamState>,
    iter: u64,
    train_seed: u64,
    history: &[HistoryRow],
) -> Result<()> {
    let header = serde_json::to_string(&SegHeader {
        kind: "seg".into(),
        config: model.config.clone(),
        iter,
        train_seed,
    })?;
    ckpt::save_checkpoint(path, ckpt::MAGIC_SEG, &header, model, optimizer, history)
}

pub fn load_seg_checkpoint(path: &Path) -> Result<SegCheckpoint> {
    let raw = ckpt::load_checkpoint(path, ckpt::MAGIC_SEG)?;
    let header: SegHeader = serde_json::from_str(&raw.header_json)?;
    let mut model = CrackNet::new(header.config)?;
    ckpt::apply_state(&mut model, &raw)?;
    Ok(SegCheckpoint {
        model,
        optimizer: raw.optimizer,
        iter: header.iter,
        train_seed: header.train_seed,
        history: raw.history,
    })
}

/// Save-then-load, returning the reloaded model; the reloaded state
/// reproduces forward outputs bit for bit.
pub fn checkpoint_roundtrip(model: &mut CrackNet, path: &Path) -> Result<CrackNet> {
    save_seg_checkpoint(path, model, None, 0, 0, &[])?;
    Ok(load_seg_checkpoint(path)?.model)
}

fn batch_tensors(
    samples: &[SegSample],
    indices: &[usize],
) -> (Array4<f64>, Vec<MaskPlane>) {
    let (c, h, w) = samples[indices[0]].image.dim();
    let mut x = Array4::zeros((indices.len(), c, h, w));
    let mut masks = Vec::with_capacity(indices.len());
    for (slot, &i) in indices.iter().enumerate() {
        x.index_axis_mut(ndarray::Axis(0), slot)
            .assign(&samples[i].image);
        masks.push(samples[i].mask.clone());
    }
    (x, masks)
}

/// Train from scratch. See [`resume_segmenter`] for continuing a run.
pub fn train_segmenter(
    model: &mut CrackNet,
    samples: &[SegSample],
    criterion: &BalancedLoss,
    config: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<Vec<HistoryRow>> {
    let state = AdamState::new_for(&model.params_mut());
    run_loop(
        model,
        state,
        0,
        Vec::new(),
        samples,
        criterion,
        config,
        checkpoint_path,
    )
}

/// Continue a checkpointed run to `config.total_iters`. The seed stored in
/// the checkpoint takes precedence so the sample stream lines up with the
/// original run.
pub fn resume_segmenter(
    path: &Path,
    samples: &[SegSample],
    criterion: &BalancedLoss,
    config: &TrainConfig,
) -> Result<(CrackNet, Vec<HistoryRow>)> {
    let loaded = load_seg_checkpoint(path)?;
    let mut model = loaded.model;
    let optimizer = loaded.optimizer.ok_or_else(|| {
        Error::CheckpointCorrupt("checkpoint has no optimizer state to resume from".into())
    })?;
    let mut config = config.clone();
    config.seed = loaded.train_seed;
    let history = run_loop(
        &mut model,
        optimizer,
        loaded.iter,
        loaded.history,
        samples,
        criterion,
        &config,
        Some(path),
    )?;
    Ok((model, history))
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    model: &mut CrackNet,
    mut state: AdamState,
    start_iter: u64,
    mut history: Vec<HistoryRow>,
    samples: &[SegSample],
    criterion: &BalancedLoss,
    config: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<Vec<HistoryRow>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("training requires a nonempty sample set"));
    }
    let hyper = AdamHyper::with_momentum(config.momentum);
    let mut shuffler = EpochShuffler::new(config.seed, samples.len());

    for iter in start_iter..config.total_iters {
        let indices: Vec<usize> = (0..config.batch_size as u64)
            .map(|b| shuffler.index_at(iter * config.batch_size as u64 + b))
            .collect();
        let (x, masks) = batch_tensors(samples, &indices);

        model.zero_grads();
        let (bundle, cache) = model.forward_train(&x)?;
        let (loss, d_side, d_fused) =
            criterion.batch_loss_and_grad(&bundle.side, &bundle.fused, &masks)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iter, value: loss });
        }
        model.backward(&cache, &d_side, &d_fused);

        let lr = lr_at(iter, config);
        state.step(
            &mut model.params_mut(),
            &hyper,
            lr,
            config.weight_decay,
        );
        history.push(HistoryRow { iter, loss, lr });

        let done = iter + 1 == config.total_iters;
        if let Some(path) = checkpoint_path {
            if (iter + 1) % config.checkpoint_every == 0 || done {
                save_seg_checkpoint(path, model, Some(&state), iter + 1, config.seed, &history)?;
            }
        }
    }
    Ok(history)
}
