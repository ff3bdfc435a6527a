use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{CnnModel, Hyper};
use super::network::{cross_entropy, gather, Workspace};
use super::{augment, check_labels, IqWindow, MAX_AUGMENTATION_DB};
use crate::rng::{stream_id, stream_rng};
use crate::{Error, Real, Result};

/// Optimisation schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// When set, every training window is duplicated with complex Gaussian
    /// noise of this power (dB relative to unit symbol energy).
    pub augmentation_db: Option<f64>,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        TrainRecipe {
            batch_size: 128,
            max_epochs: 50,
            patience: 10,
            seed: 0,
            augmentation_db: None,
        }
    }
}

impl TrainRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::config(
                "batch size, epoch budget and patience must be positive",
            ));
        }
        if let Some(db) = self.augmentation_db {
            if !(db <= MAX_AUGMENTATION_DB) {
                return Err(Error::config(format!(
                    "augmentation noise {db} dB exceeds the {MAX_AUGMENTATION_DB} dB bound"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n_params: usize) -> Self {
        Adam {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T], h: &Hyper) {
        self.step += 1;
        let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let corr1 = T::lit(1.0 - h.beta1.powi(self.step));
        let corr2 = T::lit(1.0 - h.beta2.powi(self.step));
        let (lr, eps) = (T::lit(h.learning_rate), T::lit(h.epsilon));
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
            *p -= lr * (*m / corr1) / ((*v / corr2).sqrt() + eps);
        }
    }
}

/// Loss and accuracy of `model` in inference mode.
pub(crate) fn score<T: Real>(
    model: &CnnModel<T>,
    windows: &[IqWindow<T>],
    batch: usize,
) -> Result<(f64, f64, Vec<usize>)> {
    let n = model.arch.n_classes;
    let mut preds = Vec::with_capacity(windows.len());
    let mut loss = 0.0;
    let idx: Vec<usize> = (0..windows.len()).collect();
    let mut ws = Workspace::new();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, labels) = gather(windows, chunk, model.arch.input_len)?;
        ws.forward(model, &x, chunk.len(), false, 0);
        loss += cross_entropy(&ws.probs, &labels, n) * chunk.len() as f64;
        preds.extend(ws.probs.chunks_exact(n).map(argmax));
    }
    let correct = preds
        .iter()
        .zip(windows)
        .filter(|(p, w)| **p == w.label)
        .count();
    let total = windows.len().max(1) as f64;
    Ok((loss / total, correct as f64 / total, preds))
}

pub(crate) fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch Adam training with early stopping on validation accuracy.
///
/// Returns the weights of the epoch with the best validation accuracy
/// (earliest on ties). Stops after `patience` epochs without improvement.
pub fn train<T: Real>(
    model: CnnModel<T>,
    train_set: &[IqWindow<T>],
    val_set: &[IqWindow<T>],
    recipe: &TrainRecipe,
) -> Result<(CnnModel<T>, TrainLog)> {
    recipe.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    check_labels(train_set, model.arch.n_classes)?;
    check_labels(val_set, model.arch.n_classes)?;

    let augmented;
    let data: &[IqWindow<T>] = match recipe.augmentation_db {
        Some(db) => {
            let mut all = train_set.to_vec();
            all.extend(augment(train_set, db, stream_id(&[recipe.seed, 0xa06]))?);
            augmented = all;
            &augmented
        }
        None => train_set,
    };

    let mut model = model;
    let n = model.arch.n_classes;
    let mut adam = Adam::new(model.params().len());
    let mut grad = vec![T::zero(); model.params().len()];
    let mut ws = Workspace::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut log = TrainLog::default();
    let mut since_best = 0;

    for epoch in 1..=recipe.max_epochs {
        order.shuffle(&mut stream_rng(
            recipe.seed,
            stream_id(&[0xe90c, epoch as u64]),
        ));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(recipe.batch_size).enumerate() {
            let (x, labels) = gather(data, chunk, model.arch.input_len)?;
            ws.forward(
                &model,
                &x,
                chunk.len(),
                true,
                stream_id(&[recipe.seed, epoch as u64, bi as u64]),
            );
            let loss = ws.backward(&model, &labels, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite loss or gradient in batch {bi}"),
                });
            }
            let hyper = model.hyper;
            adam.update(model.params_mut(), &grad, &hyper);
            loss_sum += loss * chunk.len() as f64;
            correct += ws
                .probs
                .chunks_exact(n)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
        }
        let (val_loss, val_acc, _) = score(&model, val_set, 256)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite validation loss".into(),
            });
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            rec.train_loss,
            rec.train_acc,
            rec.val_loss,
            rec.val_acc
        );
        log.epochs.push(rec);
        if val_acc > best_acc {
            best_acc = val_acc;
            best = model.clone();
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= recipe.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let h = Hyper::default();
        let mut p = vec![1.0f64, -1.0];
        let mut opt = Adam::new(2);
        opt.update(&mut p, &[0.5, -2.0], &h);
        assert!((p[0] - (1.0 - 1e-4)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-4)).abs() < 1e-9);
    }

    #[test]
    fn recipe_bounds() {
        let mut r = TrainRecipe::default();
        r.validate().unwrap();
        r.augmentation_db = Some(-12.0);
        assert!(r.validate().is_err());
        r.augmentation_db = Some(f64::NEG_INFINITY);
        r.validate().unwrap();
        r.patience = 0;
        assert!(r.validate().is_err());
    }
}
