//! Deterministic training loop: shuffle, forward over the batch, masked
//! scale-invariant loss, backward, AdamW under cosine annealing.
//!
//! All randomness (epoch shuffles, disrupted-mirror redraws) flows from one
//! ChaCha stream in a fixed order, so (seed, config, dataset) fully
//! determines every checkpoint, and restoring the stream position resumes a
//! run bitwise. State is checkpointed at epoch boundaries.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depth::DepthMap;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::loss::{silog_loss, LossConfig};
use crate::metrics::{compute_metrics, mean_record, CropSpec, MetricsRecord};
use crate::model::DepthModel;
use crate::optim::{cosine_lr, AdamW, OptimConfig};
use crate::synth::Frame;
use crate::tensor::Tape;

/// How the mirror behaves during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MirrorMode {
    /// The mirror is a trainable parameter (the standard mode).
    Converged,
    /// The mirror is re-drawn from N(0, 0.02) before every step and receives
    /// no update; only the decoder trains.
    Disrupted,
}

impl MirrorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MirrorMode::Converged => "converged",
            MirrorMode::Disrupted => "disrupted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(MirrorMode::Converged),
            "disrupted" => Ok(MirrorMode::Disrupted),
            other => Err(Error::Config(alloc::format!("unknown mirror mode: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub epochs: u32,
    pub batch_size: usize,
    /// Cosine horizon; 0 derives `epochs × ceil(n/batch)`.
    pub total_steps: u32,
    /// Run a full metric evaluation on the training set every this many
    /// epochs (0 = never).
    pub eval_every: u32,
    /// Seed of the training stream (shuffles, disrupted redraws).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            epochs: 250,
            batch_size: 4,
            total_steps: 0,
            eval_every: 0,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optim.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("train: batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train: epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, dataset_len: usize) -> u32 {
        (dataset_len.div_ceil(self.batch_size)) as u32
    }

    pub fn resolved_total_steps(&self, dataset_len: usize) -> u32 {
        if self.total_steps > 0 {
            self.total_steps
        } else {
            self.epochs * self.steps_per_epoch(dataset_len)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: u32,
    pub lr: f64,
    pub loss: f32,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: u32,
    pub mean_loss: f32,
    /// Present on eval epochs.
    pub metrics: Option<MetricsRecord>,
}

/// Receives per-step and per-epoch records (CSV writers, test captures).
pub trait TrainObserver {
    fn on_step(&mut self, _rec: &StepRecord) {}
    fn on_epoch(&mut self, _rec: &EpochRecord) {}
}

/// Ignores everything.
pub struct NullObserver;
impl TrainObserver for NullObserver {}

/// Collects every record.
#[derive(Default)]
pub struct RecordingObserver {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainObserver for RecordingObserver {
    fn on_step(&mut self, rec: &StepRecord) {
        self.steps.push(*rec);
    }
    fn on_epoch(&mut self, rec: &EpochRecord) {
        self.epochs.push(*rec);
    }
}

/// Mutable training state, exactly restorable from a checkpoint.
pub struct TrainState<E: Element> {
    pub epoch: u32,
    pub step: u32,
    pub rng: ChaCha8Rng,
    pub opt: AdamW<E>,
    pub mirror_mode: MirrorMode,
    pub total_steps: u32,
}

impl<E: Element> TrainState<E> {
    pub fn new(
        model: &DepthModel<E>,
        cfg: &TrainConfig,
        mirror_mode: MirrorMode,
        dataset_len: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if dataset_len == 0 {
            return Err(Error::Config("train: dataset is empty".into()));
        }
        // In disrupted mode the mirror gets no updates and no moments.
        let updated: Vec<_> = model
            .store
            .ids_trainable()
            .into_iter()
            .filter(|&id| mirror_mode == MirrorMode::Converged || id != model.mirror)
            .collect();
        Ok(TrainState {
            epoch: 0,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            opt: AdamW::new(cfg.optim.clone(), &model.store, updated),
            mirror_mode,
            total_steps: cfg.resolved_total_steps(dataset_len),
        })
    }
}

/// Advance training to `until_epoch` (exclusive upper bound in epochs).
pub fn train_epochs<E: Element>(
    model: &mut DepthModel<E>,
    state: &mut TrainState<E>,
    dataset: &[Frame],
    cfg: &TrainConfig,
    until_epoch: u32,
    obs: &mut dyn TrainObserver,
) -> Result<()> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    while state.epoch < until_epoch {
        order.sort_unstable();
        order.shuffle(&mut state.rng);
        let mut epoch_loss = 0.0f64;
        let mut epoch_steps = 0u32;
        for batch in order.chunks(cfg.batch_size) {
            let loss = train_step(model, state, dataset, batch, cfg)?;
            epoch_loss += loss as f64;
            epoch_steps += 1;
            obs.on_step(&StepRecord {
                step: state.step,
                lr: cosine_lr(state.step, state.total_steps, &cfg.optim)?,
                loss,
            });
            state.step += 1;
        }
        state.epoch += 1;
        let metrics = if cfg.eval_every > 0 && state.epoch % cfg.eval_every == 0 {
            Some(evaluate_on(model, dataset, &cfg.loss)?)
        } else {
            None
        };
        obs.on_epoch(&EpochRecord {
            epoch: state.epoch,
            mean_loss: (epoch_loss / epoch_steps as f64) as f32,
            metrics,
        });
    }
    Ok(())
}

fn train_step<E: Element>(
    model: &mut DepthModel<E>,
    state: &mut TrainState<E>,
    dataset: &[Frame],
    batch: &[usize],
    cfg: &TrainConfig,
) -> Result<f32> {
    if state.mirror_mode == MirrorMode::Disrupted {
        model.redraw_mirror_from(&mut state.rng);
    }
    let lr = cosine_lr(state.step, state.total_steps, &cfg.optim)?;

    let mut tape = Tape::<E>::new();
    let bind = model.bind(&mut tape)?;
    let size = model.cfg.vision.image_size;
    let mut total = None;
    for &idx in batch {
        let frame = &dataset[idx];
        let img = frame.rgb.resized(size, size);
        let logits = model.forward(&mut tape, &bind, &img)?;
        let pred = model.predict_depth(&mut tape, logits, frame.depth.height, frame.depth.width)?;
        let l = silog_loss(&mut tape, pred, &frame.depth, &cfg.loss)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let total = total.expect("non-empty batch");
    let loss = tape.scale(total, E::from_f64(1.0 / batch.len() as f64))?;
    tape.backward(loss)?;
    let loss_value = tape.scalar_value(loss).as_f64() as f32;

    let grads: Vec<Option<Vec<E>>> = state
        .opt
        .updated_ids()
        .iter()
        .map(|&id| tape.take_grad(bind.get(id)))
        .collect();
    drop(tape);
    let grad_slices: Vec<Option<&[E]>> = grads.iter().map(|g| g.as_deref()).collect();
    state.opt.step(&mut model.store, &grad_slices, lr)?;
    Ok(loss_value)
}

/// Metric sweep of the current model over a frame set (used by the
/// per-epoch evaluation records and the trainer tests).
pub fn evaluate_on<E: Element>(
    model: &DepthModel<E>,
    frames: &[Frame],
    loss_cfg: &LossConfig,
) -> Result<MetricsRecord> {
    let mut records = Vec::with_capacity(frames.len());
    for frame in frames {
        let pred = model.infer(&frame.rgb)?;
        records.push(compute_metrics(
            &pred,
            &frame.depth,
            &CropSpec::NONE,
            loss_cfg.min_depth,
            loss_cfg.max_depth,
        )?);
    }
    mean_record(&records).ok_or(Error::EmptyMask("evaluate_on"))
}

/// Train from scratch for `cfg.epochs`, returning the final state.
pub fn train<E: Element>(
    model: &mut DepthModel<E>,
    dataset: &[Frame],
    cfg: &TrainConfig,
    mirror_mode: MirrorMode,
    obs: &mut dyn TrainObserver,
) -> Result<TrainState<E>> {
    let mut state = TrainState::new(model, cfg, mirror_mode, dataset.len())?;
    train_epochs(model, &mut state, dataset, cfg, cfg.epochs, obs)?;
    Ok(state)
}

/// Inference entry point mirroring the training forward path (no tape
/// gradients, no updates); output matches the input's spatial size.
pub fn infer<E: Element>(model: &DepthModel<E>, image: &crate::depth::ImageBuf) -> Result<DepthMap> {
    model.infer(image)
}
