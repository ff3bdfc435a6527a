use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Real, Result, WINDOW_LEN};

/// Layer sizes of the two-conv, three-dense network.
///
/// Input is a `2 x input_len` window. `conv1` slides `conv1_width`-tap
/// filters along each row separately (shared across rows); `conv2` spans
/// both rows and all `conv1` channels. Convolutions are valid, stride 1,
/// without pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub conv1_filters: usize,
    pub conv1_width: usize,
    pub conv2_filters: usize,
    pub conv2_width: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub n_classes: usize,
}

impl Architecture {
    /// 2x128 input, 50 1x7 filters, 50 2x7 filters, dense 256 and 80.
    pub fn standard(n_classes: usize) -> Self {
        Architecture {
            input_len: WINDOW_LEN,
            conv1_filters: 50,
            conv1_width: 7,
            conv2_filters: 50,
            conv2_width: 7,
            fc1: 256,
            fc2: 80,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.input_len,
            self.conv1_filters,
            self.conv1_width,
            self.conv2_filters,
            self.conv2_width,
            self.fc1,
            self.fc2,
        ];
        if sizes.contains(&0) || self.n_classes < 2 {
            return Err(Error::config(format!("degenerate architecture {self:?}")));
        }
        if self.conv1_width + self.conv2_width > self.input_len + 1 {
            return Err(Error::config(format!(
                "input of {} samples is too short for {}- and {}-tap convolutions",
                self.input_len, self.conv1_width, self.conv2_width
            )));
        }
        Ok(())
    }

    /// Positions after `conv1`.
    pub fn conv1_len(&self) -> usize {
        self.input_len - self.conv1_width + 1
    }

    /// Positions after `conv2`.
    pub fn conv2_len(&self) -> usize {
        self.conv1_len() - self.conv2_width + 1
    }

    /// Length of one column of the `conv2` patch matrix.
    pub fn conv2_patch(&self) -> usize {
        2 * self.conv2_width * self.conv1_filters
    }

    pub fn flat_len(&self) -> usize {
        self.conv2_len() * self.conv2_filters
    }

    /// Parameter tensors in storage order.
    ///
    /// `conv2.weight` is laid out `[out, row, tap, in_channel]` and
    /// `fc1.weight` reads the `conv2` output position-major
    /// (`[position, channel]`).
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let t = |name: &str, shape: Vec<usize>, fan: Option<(usize, usize)>| TensorSpec {
            name: name.to_string(),
            shape,
            fan,
        };
        let (c1, k1, c2, k2) = (
            self.conv1_filters,
            self.conv1_width,
            self.conv2_filters,
            self.conv2_width,
        );
        vec![
            t("conv1.weight", vec![c1, k1], Some((k1, k1 * c1))),
            t("conv1.bias", vec![c1], None),
            t(
                "conv2.weight",
                vec![c2, 2, k2, c1],
                Some((self.conv2_patch(), 2 * k2 * c2)),
            ),
            t("conv2.bias", vec![c2], None),
            t(
                "fc1.weight",
                vec![self.fc1, self.flat_len()],
                Some((self.flat_len(), self.fc1)),
            ),
            t("fc1.bias", vec![self.fc1], None),
            t(
                "fc2.weight",
                vec![self.fc2, self.fc1],
                Some((self.fc1, self.fc2)),
            ),
            t("fc2.bias", vec![self.fc2], None),
            t(
                "out.weight",
                vec![self.n_classes, self.fc2],
                Some((self.fc2, self.n_classes)),
            ),
            t("out.bias", vec![self.n_classes], None),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(TensorSpec::len).sum()
    }
}

/// Name, shape and (for weights) Glorot fan-in/fan-out of one tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub fan: Option<(usize, usize)>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_weight(&self) -> bool {
        self.name.ends_with(".weight")
    }
}

/// Training hyperparameters carried with the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub dropout: f64,
    pub l2: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            dropout: 0.5,
            l2: 1e-4,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.dropout)
            && self.l2 >= 0.0
            && self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::config(format!("invalid hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Network weights as one flat buffer in [`Architecture::tensors`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel<T> {
    pub arch: Architecture,
    pub hyper: Hyper,
    params: Vec<T>,
}

/// Offset and length of a tensor inside the flat buffer.
pub(crate) fn tensor_range(arch: &Architecture, name: &str) -> std::ops::Range<usize> {
    let mut off = 0;
    for t in arch.tensors() {
        if t.name == name {
            return off..off + t.len();
        }
        off += t.len();
    }
    panic!("unknown tensor {name}");
}

impl<T: Real> CnnModel<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new(arch: Architecture, hyper: Hyper, seed: u64) -> Result<Self> {
        arch.validate()?;
        hyper.validate()?;
        let mut rng = stream_rng(seed, 0x1417);
        let mut params = Vec::with_capacity(arch.param_count());
        for t in arch.tensors() {
            match t.fan {
                Some((fan_in, fan_out)) => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    params.extend((0..t.len()).map(|_| T::lit(rng.random_range(-limit..limit))));
                }
                None => params.extend(std::iter::repeat_n(T::zero(), t.len())),
            }
        }
        Ok(CnnModel {
            arch,
            hyper,
            params,
        })
    }

    pub fn zeros(arch: Architecture, hyper: Hyper) -> Result<Self> {
        arch.validate()?;
        hyper.validate()?;
        Ok(CnnModel {
            arch,
            hyper,
            params: vec![T::zero(); arch.param_count()],
        })
    }

    pub fn from_params(arch: Architecture, hyper: Hyper, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        hyper.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("model weights must be finite"));
        }
        Ok(CnnModel {
            arch,
            hyper,
            params,
        })
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> &[T] {
        &self.params[tensor_range(&self.arch, name)]
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut [T] {
        let r = tensor_range(&self.arch, name);
        &mut self.params[r]
    }

    pub fn cast<U: Real>(&self) -> CnnModel<U> {
        CnnModel {
            arch: self.arch,
            hyper: self.hyper,
            params: self.params.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        let mut off = 0;
        let mut acc = 0.0;
        for t in self.arch.tensors() {
            if t.is_weight() {
                acc += self.params[off..off + t.len()]
                    .iter()
                    .map(|w| w.as_f64() * w.as_f64())
                    .sum::<f64>();
            }
            off += t.len();
        }
        acc
    }
}
