//! A small convolutional classifier with a class head and a four-way
//! rotation head, trained with hand-written reverse-mode gradients.
//!
//! Layout: for each stage, a 3x3 same-padded convolution, ReLU and 2x2 max
//! pooling; then a fully connected ReLU layer shared by the two linear heads.
//! Parameters and activations are `f64`.

mod network;
mod optim;

pub use network::{
    backward, forward, predict, Classifier, ClassifierRef, ForwardCache, ForwardOutput, Gradients,
};
pub use optim::{adam_step, ema_update, OptimizerConfig, OptimizerState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

pub const ROTATION_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Output channels of each convolution stage.
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    /// Two stages of 32 and 64 channels and a 128-unit hidden layer.
    pub fn standard(height: usize, width: usize, channels: usize, classes: usize) -> Self {
        Self {
            height,
            width,
            channels,
            conv_channels: vec![32, 64],
            hidden: 128,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(contract("need at least two classes"));
        }
        if self.hidden == 0 || self.conv_channels.iter().any(|&c| c == 0) {
            return Err(contract("layer widths must be nonzero"));
        }
        let (h, w) = self.feature_size();
        if h == 0 || w == 0 {
            return Err(contract(format!(
                "{}x{} input is too small for {} pooling stages",
                self.height,
                self.width,
                self.conv_channels.len()
            )));
        }
        Ok(())
    }

    /// Spatial size after all pooling stages.
    pub fn feature_size(&self) -> (usize, usize) {
        let n = self.conv_channels.len() as u32;
        (self.height >> n, self.width >> n)
    }

    pub fn flat_features(&self) -> usize {
        let (h, w) = self.feature_size();
        h * w * self.conv_channels.last().copied().unwrap_or(self.channels)
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut c_in = self.channels;
        for (i, &c_out) in self.conv_channels.iter().enumerate() {
            shapes.push((format!("conv{i}.weight"), vec![c_out, c_in, 3, 3]));
            shapes.push((format!("conv{i}.bias"), vec![c_out]));
            c_in = c_out;
        }
        shapes.push(("fc.weight".into(), vec![self.hidden, self.flat_features()]));
        shapes.push(("fc.bias".into(), vec![self.hidden]));
        shapes.push(("class.weight".into(), vec![self.classes, self.hidden]));
        shapes.push(("class.bias".into(), vec![self.classes]));
        shapes.push(("rotation.weight".into(), vec![ROTATION_CLASSES, self.hidden]));
        shapes.push(("rotation.bias".into(), vec![ROTATION_CLASSES]));
        shapes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Named parameter tensors. `version` changes on every in-place update so
/// that stale forward caches can be detected.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub tensors: Vec<Tensor>,
    version: u64,
}

impl ModelParams {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = arch
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let mut t = Tensor::zeros(name, shape);
                if t.shape.len() > 1 {
                    let fan_in: usize = t.shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for v in &mut t.data {
                        *v = rng.random_range(-bound..bound);
                    }
                }
                t
            })
            .collect();
        Ok(Self { tensors, version: 0 })
    }

    /// Adopts tensors loaded from storage after checking them against `arch`.
    pub fn from_tensors(arch: &Architecture, tensors: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.tensor_shapes();
        if shapes.len() != tensors.len() {
            return Err(contract(format!(
                "architecture has {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if name != &t.name || shape != &t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(contract(format!("tensor {} does not match architecture", t.name)));
            }
        }
        Ok(Self { tensors, version: 0 })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.version += 1;
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
