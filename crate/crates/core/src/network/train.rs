//! Mini-batch SGD on softmax cross-entropy.
//!
//! Per-sample gradients are computed in fixed-size chunks (possibly in
//! parallel) and summed chunk by chunk in sample order, so a training run
//! is bit-reproducible for a given seed whatever the thread count.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, cross_entropy_grad};
use super::model::{Mode, Model};
use crate::datagen::{stratified_split, Split};
use crate::error::{Error, Result};
use crate::numerics::{argmax, derive_seed, Exec, Rng, Tensor};

const CHUNK: usize = 4;

// Child-seed labels fanned out from TrainConfig::seed.
const SEED_SPLIT: u64 = 1;
const SEED_SHUFFLE: u64 = 2;
const SEED_DROPOUT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    SgdMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub momentum: f64,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            optimizer: Optimizer::Sgd,
            momentum: 0.0,
            seed: crate::numerics::DEFAULT_SEED,
            train_fraction: 0.7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Configuration(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Configuration(format!(
                "learning rate must be a non-negative number, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Configuration(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Configuration(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    fn effective_momentum(&self) -> f64 {
        match self.optimizer {
            Optimizer::Sgd => 0.0,
            Optimizer::SgdMomentum => self.momentum,
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SEED_SPLIT)
    }
}

/// One labelled model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub split: Split,
}

impl TrainLog {
    /// `epoch,train_loss,train_acc,val_loss,val_acc` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

fn check_dataset(model: &Model, samples: &[Sample]) -> Result<usize> {
    let classes = model
        .num_classes()
        .ok_or_else(|| Error::Configuration(format!("{} is not a classifier", model.arch())))?;
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut counts = vec![0usize; classes];
    for s in samples {
        if s.label >= classes {
            return Err(Error::Data(format!(
                "label {} out of range for {classes} classes",
                s.label
            )));
        }
        counts[s.label] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("class {empty} has no samples")));
    }
    Ok(classes)
}

/// Splits `samples` per class with `cfg.train_fraction`, then trains.
pub fn train(
    model: &mut Model,
    samples: &[Sample],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_dataset(model, samples)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let split = stratified_split(&labels, cfg.train_fraction, cfg.split_seed())?;
    train_on_split(model, samples, &split, cfg, exec)
}

/// Trains on `split.train`, reporting metrics on both halves after every epoch.
pub fn train_on_split(
    model: &mut Model,
    samples: &[Sample],
    split: &Split,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainLog> {
    train_with_observer(model, samples, split, cfg, exec, |_, _| {})
}

/// [`train_on_split`] that hands the model to `on_epoch` after each epoch.
pub fn train_with_observer(
    model: &mut Model,
    samples: &[Sample],
    split: &Split,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochLog, &Model),
) -> Result<TrainLog> {
    cfg.validate()?;
    check_dataset(model, samples)?;
    if split.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if let Some(&bad) = split
        .train
        .iter()
        .chain(&split.val)
        .find(|&&i| i >= samples.len())
    {
        return Err(Error::Data(format!("split index {bad} out of range")));
    }
    let momentum = cfg.effective_momentum();
    let mut velocity: Vec<Tensor> = model
        .parameters()
        .iter()
        .map(|(_, t)| Tensor::zeros(t.shape()))
        .collect();
    let root = Rng::new(cfg.seed);
    let dropout_root = derive_seed(cfg.seed, SEED_DROPOUT);
    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        split: split.clone(),
    };

    for epoch in 0..cfg.epochs {
        let mut order = split.train.clone();
        root.child(SEED_SHUFFLE)
            .child(epoch as u64)
            .shuffle(&mut order);
        let epoch_seed = derive_seed(dropout_root, epoch as u64);
        for batch in order.chunks(cfg.batch_size) {
            let frozen: &Model = model;
            let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
            let partials = exec.map(&chunks, |chunk| -> Result<Vec<Tensor>> {
                let mut acc: Vec<Tensor> = frozen
                    .parameters()
                    .iter()
                    .map(|(_, t)| Tensor::zeros(t.shape()))
                    .collect();
                for &idx in chunk.iter() {
                    let sample = &samples[idx];
                    let mut rng = Rng::new(derive_seed(epoch_seed, idx as u64));
                    let (probs, cache) =
                        frozen.forward(&sample.input, Mode::Train, Some(&mut rng))?;
                    let g = cross_entropy_grad(&probs, sample.label)?;
                    frozen.accumulate_param_grads(&cache.expect("train cache"), &g, &mut acc)?;
                }
                Ok(acc)
            });
            let mut total: Option<Vec<Tensor>> = None;
            for p in partials {
                let p = p?;
                match total.as_mut() {
                    None => total = Some(p),
                    Some(t) => t.iter_mut().zip(&p).for_each(|(x, y)| x.add_assign(y)),
                }
            }
            let total = total.expect("non-empty batch");
            let step = cfg.learning_rate / batch.len() as f64;
            for ((param, v), g) in model
                .parameters_mut()
                .into_iter()
                .zip(&mut velocity)
                .zip(&total)
            {
                for ((w, vel), &gi) in param.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vel = momentum * *vel - step * gi;
                    *w += *vel;
                }
            }
            if model
                .parameters()
                .iter()
                .any(|(_, t)| t.data().iter().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFinite(format!(
                    "training diverged in epoch {}",
                    epoch + 1
                )));
            }
        }
        let (train_loss, train_acc) = evaluate(model, samples, &split.train, exec)?;
        let (val_loss, val_acc) = if split.val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate(model, samples, &split.val, exec)?
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        };
        on_epoch(&entry, model);
        log.epochs.push(entry);
    }
    Ok(log)
}

/// Mean cross-entropy and accuracy in infer mode over `indices`.
pub fn evaluate(
    model: &Model,
    samples: &[Sample],
    indices: &[usize],
    exec: Exec,
) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let results = exec.map(indices, |&i| -> Result<(f64, bool)> {
        let s = &samples[i];
        let probs = model.infer(&s.input)?;
        Ok((
            cross_entropy(&probs, s.label)?,
            argmax(probs.data()) == s.label,
        ))
    });
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in results {
        let (l, ok) = r?;
        loss += l;
        correct += usize::from(ok);
    }
    let n = indices.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Class probabilities for every sample, in order.
pub fn predict_all(model: &Model, inputs: &[Tensor], exec: Exec) -> Result<Vec<Vec<f64>>> {
    exec.map(inputs, |x| model.infer(x).map(Tensor::into_data))
        .into_iter()
        .collect()
}
