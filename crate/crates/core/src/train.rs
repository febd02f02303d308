//! Mini-batch training loop, prediction and evaluation helpers.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::arch::{Model, NetSpec};
use crate::error::{Error, Result};
use crate::layers::{softmax, softmax_xent, Mode};
use crate::metrics::{evaluate, Class, LabelMap, MetricReport};
use crate::optim::{seeded_rng, Adam, AdamConfig, PlateauSchedule};
use crate::phantom::Sample;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub patience: u32,
    pub factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 4, lr: 1e-4, seed: 0, patience: 20, factor: 0.5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == 0 || !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config("patience must be positive and factor in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: u32,
    pub train_loss: f64,
    /// Mean validation DSC per class (`None` if undefined on every sample).
    pub val_dsc: [Option<f64>; 4],
    /// Mean of the defined foreground entries of `val_dsc`.
    pub val_mean_dsc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    /// Learning rate for the next epoch.
    pub next_lr: f64,
    pub improved: bool,
}

/// Model, optimizer, schedule and shuffling state. Everything needed to
/// resume training lives in the public fields.
pub struct Trainer<T: Scalar = f32> {
    pub model: Model<T>,
    pub adam: Adam<T>,
    pub schedule: PlateauSchedule,
    pub rng: ChaCha8Rng,
    pub batch_size: usize,
    /// Completed epochs.
    pub epoch: u32,
    pub best_dsc: Option<f64>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(spec: &NetSpec, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(spec, cfg.seed)?;
        let mut schedule = PlateauSchedule::new(cfg.lr);
        schedule.patience = cfg.patience;
        schedule.factor = cfg.factor;
        Ok(Trainer {
            model,
            adam: Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }),
            schedule,
            rng: seeded_rng(cfg.seed ^ 0x7261_6e64),
            batch_size: cfg.batch_size,
            epoch: 0,
            best_dsc: None,
        })
    }

    /// One optimizer step on a batch; returns the batch loss.
    pub fn step(&mut self, batch: &[&Sample]) -> Result<f64> {
        let x = stack_images::<T>(batch)?;
        let targets: Vec<LabelMap> = batch.iter().map(|s| s.labels.clone()).collect();
        let logits = self.model.forward(&x, Mode::Train)?;
        let (loss, grad) = softmax_xent(&logits, &targets)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(Error::TrainingFault(format!("loss became {} at epoch {}", loss, self.epoch + 1)));
        }
        self.model.zero_grad();
        self.model.backward(&grad)?;
        self.adam.step(&mut self.model.trainable_mut())?;
        Ok(loss)
    }

    /// One pass over `train` in a seeded random order. Returns the mean batch loss.
    pub fn train_epoch(&mut self, train: &[Sample]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            total += self.step(&batch)?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// Trains one epoch, validates, and advances the schedule.
    pub fn run_epoch(&mut self, train: &[Sample], val: &[Sample]) -> Result<EpochStats> {
        let lr = self.adam.lr();
        let train_loss = self.train_epoch(train)?;
        let reports = evaluate_set(&self.model, val)?;
        let val_dsc = mean_dsc(&reports);
        let val_mean_dsc = foreground_mean(&val_dsc);
        let next_lr = self.schedule.update(val_mean_dsc)?;
        self.adam.set_lr(next_lr);
        self.epoch += 1;
        let improved = self.best_dsc.map_or(true, |b| val_mean_dsc > b);
        if improved {
            self.best_dsc = Some(val_mean_dsc);
        }
        Ok(EpochStats { epoch: self.epoch, train_loss, val_dsc, val_mean_dsc, lr, next_lr, improved })
    }
}

/// Stacks single-channel sample images into `(B, 1, H, W)`.
pub fn stack_images<T: Scalar>(batch: &[&Sample]) -> Result<Tensor<T>> {
    let first = batch.first().ok_or_else(|| Error::Config("empty batch".into()))?;
    let s = first.image.shape();
    let mut data = Vec::with_capacity(batch.len() * s.numel());
    for b in batch {
        if b.image.shape() != s {
            return Err(Error::Shape(format!("batch mixes image shapes {} and {}", s, b.image.shape())));
        }
        data.extend(b.image.data().iter().map(|&v| T::of(v as f64)));
    }
    Tensor::from_vec(Shape::new(batch.len(), s.c(), s.h(), s.w())?, data)
}

/// Per-pixel argmax over channels of `(1, C, H, W)` scores.
pub fn argmax_labels<T: Scalar>(scores: &Tensor<T>) -> Result<LabelMap> {
    let s = scores.shape();
    if s.n() != 1 {
        return Err(Error::Shape(format!("argmax expects a single sample, got {}", s)));
    }
    let plane = s.plane();
    let d = scores.data();
    let codes = (0..plane)
        .map(|p| {
            let mut best = 0;
            for c in 1..s.c() {
                if d[c * plane + p] > d[best * plane + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(s.h(), s.w(), codes)
}

/// Softmax probabilities and argmax labels for one image `(1, 1, H, W)`.
pub fn predict<T: Scalar>(model: &Model<T>, image: &Tensor<f32>) -> Result<(LabelMap, Tensor<T>)> {
    let x: Tensor<T> = image.cast();
    let probs = softmax(&model.infer(&x)?);
    Ok((argmax_labels(&probs)?, probs))
}

pub fn evaluate_set<T: Scalar>(model: &Model<T>, samples: &[Sample]) -> Result<Vec<MetricReport>> {
    samples
        .iter()
        .map(|s| {
            let (mut pred, _) = predict(model, &s.image)?;
            pred.set_spacing(s.labels.spacing())?;
            evaluate(&pred, &s.labels)
        })
        .collect()
}

/// Mean DSC per class over the samples where it is defined.
pub fn mean_dsc(reports: &[MetricReport]) -> [Option<f64>; 4] {
    core::array::from_fn(|c| {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.dsc[c]).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    })
}

/// Mean of the defined foreground class values; 0 when none is defined.
pub fn foreground_mean(per_class: &[Option<f64>; 4]) -> f64 {
    let vals: Vec<f64> = Class::FOREGROUND.iter().filter_map(|c| per_class[c.code() as usize]).collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}
