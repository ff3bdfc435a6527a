//! Convolutional classifier over `2 x 128` I/Q windows: dataset windowing,
//! noise augmentation, training and evaluation.

mod model;
mod network;
mod train;

pub use model::{Architecture, CnnModel, Hyper, TensorSpec};
pub use train::{train, Adam, EpochRecord, TrainLog, TrainRecipe};

use std::io::Write;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::baseband::IqTrace;
use crate::rng::{complex_gaussian, db_to_power, stream_id, stream_rng};
use crate::{Error, Real, Result, WINDOW_LEN};

/// Strongest augmentation noise accepted, in dB.
pub const MAX_AUGMENTATION_DB: f64 = -13.0;

/// One labelled `2 x n` window: `values[..n]` is I, `values[n..]` is Q.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqWindow<T> {
    pub values: Vec<T>,
    pub label: usize,
}

impl<T: Real> IqWindow<T> {
    pub fn from_samples(samples: &[Complex<T>], label: usize) -> Result<Self> {
        if samples.is_empty()
            || samples
                .iter()
                .any(|s| !s.re.is_finite() || !s.im.is_finite())
        {
            return Err(Error::invalid(
                "window samples must be non-empty and finite",
            ));
        }
        let mut values = Vec::with_capacity(2 * samples.len());
        values.extend(samples.iter().map(|s| s.re));
        values.extend(samples.iter().map(|s| s.im));
        Ok(IqWindow { values, label })
    }

    /// Samples per row.
    pub fn len(&self) -> usize {
        self.values.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn i(&self) -> &[T] {
        &self.values[..self.len()]
    }

    pub fn q(&self) -> &[T] {
        &self.values[self.len()..]
    }

    pub fn samples(&self) -> Vec<Complex<T>> {
        self.i()
            .iter()
            .zip(self.q())
            .map(|(&re, &im)| Complex::new(re, im))
            .collect()
    }
}

/// Sliding `WINDOW_LEN` windows at offsets `0, stride, 2 stride, ...`.
pub fn windows_from_samples<T: Real>(
    samples: &[Complex<T>],
    stride: usize,
    label: usize,
) -> Result<Vec<IqWindow<T>>> {
    if stride == 0 {
        return Err(Error::invalid("window stride must be at least 1"));
    }
    if samples.len() < WINDOW_LEN {
        return Err(Error::invalid(format!(
            "stream of {} samples is shorter than one {WINDOW_LEN}-sample window",
            samples.len()
        )));
    }
    (0..=(samples.len() - WINDOW_LEN) / stride)
        .map(|k| IqWindow::from_samples(&samples[k * stride..k * stride + WINDOW_LEN], label))
        .collect()
}

/// Windows of a trace labelled with its device.
pub fn make_windows<T: Real>(trace: &IqTrace<T>, stride: usize) -> Result<Vec<IqWindow<T>>> {
    windows_from_samples(&trace.samples, stride, trace.device_label as usize)
}

/// Adds complex Gaussian noise of `noise_power_db` to every sample, with an
/// independent stream per window.
pub fn augment<T: Real>(
    windows: &[IqWindow<T>],
    noise_power_db: f64,
    seed: u64,
) -> Result<Vec<IqWindow<T>>> {
    if !(noise_power_db <= MAX_AUGMENTATION_DB) {
        return Err(Error::invalid(format!(
            "augmentation noise {noise_power_db} dB exceeds the {MAX_AUGMENTATION_DB} dB bound"
        )));
    }
    let power = db_to_power(noise_power_db);
    if power == 0.0 {
        return Ok(windows.to_vec());
    }
    Ok(windows
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut rng = stream_rng(seed, stream_id(&[0xa06, k as u64]));
            let n = w.len();
            let mut values = w.values.clone();
            for i in 0..n {
                let z: Complex<T> = complex_gaussian(&mut rng, power);
                values[i] += z.re;
                values[n + i] += z.im;
            }
            IqWindow {
                values,
                label: w.label,
            }
        })
        .collect())
}

pub(crate) fn check_labels<T>(windows: &[IqWindow<T>], n_classes: usize) -> Result<()> {
    match windows.iter().find(|w| w.label >= n_classes) {
        Some(w) => Err(Error::invalid(format!(
            "label {} outside {n_classes} classes",
            w.label
        ))),
        None => Ok(()),
    }
}

fn all_indices<T>(windows: &[IqWindow<T>]) -> Vec<usize> {
    (0..windows.len()).collect()
}

/// Class probabilities, one row per window. Dropout is active only in
/// `train_mode` and then depends on `seed`.
pub fn forward<T: Real>(
    model: &CnnModel<T>,
    batch: &[IqWindow<T>],
    train_mode: bool,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let (x, _) = network::gather(batch, &all_indices(batch), model.arch.input_len)?;
    let mut ws = network::Workspace::new();
    ws.forward(model, &x, batch.len(), train_mode, seed);
    Ok(ws
        .probs
        .chunks_exact(model.arch.n_classes)
        .map(<[T]>::to_vec)
        .collect())
}

/// Objective `mean cross-entropy + l2 * sum(weights^2)` and its gradient in
/// parameter order.
pub fn loss_and_gradient<T: Real>(
    model: &CnnModel<T>,
    batch: &[IqWindow<T>],
    train_mode: bool,
    seed: u64,
) -> Result<(f64, Vec<T>)> {
    check_labels(batch, model.arch.n_classes)?;
    let (x, labels) = network::gather(batch, &all_indices(batch), model.arch.input_len)?;
    let mut ws = network::Workspace::new();
    ws.forward(model, &x, batch.len(), train_mode, seed);
    let mut grad = vec![T::zero(); model.params().len()];
    let data = ws.backward(model, &labels, &mut grad);
    Ok((data + model.hyper.l2 * model.weight_norm_sq(), grad))
}

/// The objective of [`loss_and_gradient`] alone.
pub fn loss<T: Real>(
    model: &CnnModel<T>,
    batch: &[IqWindow<T>],
    train_mode: bool,
    seed: u64,
) -> Result<f64> {
    check_labels(batch, model.arch.n_classes)?;
    let (x, labels) = network::gather(batch, &all_indices(batch), model.arch.input_len)?;
    let mut ws = network::Workspace::new();
    ws.forward(model, &x, batch.len(), train_mode, seed);
    Ok(
        network::cross_entropy(&ws.probs, &labels, model.arch.n_classes)
            + model.hyper.l2 * model.weight_norm_sq(),
    )
}

/// Arg-max class per window.
pub fn predict<T: Real>(model: &CnnModel<T>, windows: &[IqWindow<T>]) -> Result<Vec<usize>> {
    Ok(train::score(model, windows, 256)?.2)
}

/// Counts indexed `[truth][prediction]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_predictions(
        n_classes: usize,
        truth: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid("truth and prediction counts differ"));
        }
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::invalid(format!(
                    "class index outside {n_classes} classes"
                )));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Trace over total (0 for an empty matrix).
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let n = self.counts.len();
        wr.write_record(
            std::iter::once("truth".to_string()).chain((0..n).map(|p| format!("pred_{p}"))),
        )?;
        for (t, row) in self.counts.iter().enumerate() {
            wr.write_record(std::iter::once(t.to_string()).chain(row.iter().map(u64::to_string)))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Predicts every window and tallies against its label.
pub fn evaluate<T: Real>(model: &CnnModel<T>, windows: &[IqWindow<T>]) -> Result<ConfusionMatrix> {
    check_labels(windows, model.arch.n_classes)?;
    let preds = predict(model, windows)?;
    let truth: Vec<usize> = windows.iter().map(|w| w.label).collect();
    ConfusionMatrix::from_predictions(model.arch.n_classes, &truth, &preds)
}
