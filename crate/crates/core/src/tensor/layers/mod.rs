//! Layers with a forward pass that records what the reverse pass needs and a
//! vector–Jacobian product that turns an upstream gradient into input
//! gradients while accumulating parameter gradients.
//!
//! Each layer also has a cache-free [`Layer::infer`] path taking `&self`, so
//! an immutable model can serve concurrent callers.

mod activation;
mod batch_norm;
mod conv;
mod dense;
mod dropout;
mod reshape;

pub use activation::{relu, sigmoid, Activation, ActivationKind};
pub use batch_norm::{BatchNorm, BatchNormConfig};
pub use conv::{conv2d, conv_transpose2d, same_padding, Conv2d, ConvTranspose2d};
pub use dense::{dense, Dense};
pub use dropout::{dropout, Dropout};
pub use reshape::{Flatten, Reshape};

use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout active, moving statistics updated.
    Train,
    /// Moving statistics, dropout is the identity.
    Infer,
}

pub struct Ctx<'a> {
    pub mode: Mode,
    pub rng: &'a mut Rng,
}

impl<'a> Ctx<'a> {
    pub fn new(mode: Mode, rng: &'a mut Rng) -> Self {
        Ctx { mode, rng }
    }
}

/// One named parameter array and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Param {
            name: name.into(),
            value,
            grad,
            trainable,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn count(&self) -> usize {
        self.value.len()
    }
}

pub trait Layer<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// Keras-style type label, e.g. `Conv2D`.
    fn kind(&self) -> &'static str;

    /// Output shape for an input shape, both without the batch dimension.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>>;

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Reverse pass for the most recent `forward`. Parameter gradients are
    /// accumulated, not overwritten.
    fn backward(&mut self, grad_output: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    /// Declares externally restored running statistics usable. Only layers
    /// that keep such statistics act on it.
    fn restore_statistics(&mut self) {}

    fn keeps_statistics(&self) -> bool {
        false
    }

    /// Overwrites per-channel running statistics. A no-op for layers
    /// without them.
    fn set_running_statistics(&mut self, _mean: &[f64], _var: &[f64]) -> Result<()> {
        Ok(())
    }
}

pub(crate) fn not_run(name: &str) -> Error {
    Error::BackwardBeforeForward {
        layer: name.to_string(),
    }
}

/// Layers applied in order.
#[derive(Default)]
pub struct Sequential<T: Real> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Real> Sequential<T> {
    pub fn new() -> Self {
        Sequential { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) {
        self.layers.push(Box::new(layer));
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<T>>] {
        &mut self.layers
    }

    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter_mut();
        let Some(first) = iter.next() else {
            return Ok(x.clone());
        };
        let mut h = first.forward(x, ctx)?;
        for layer in iter {
            h = layer.forward(&h, ctx)?;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter();
        let Some(first) = iter.next() else {
            return Ok(x.clone());
        };
        let mut h = first.infer(x)?;
        for layer in iter {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Sets every statistics-keeping layer's running mean and variance to
    /// the exact per-channel population values of its input over all
    /// batches. Layers are visited in order, so each one sees inputs
    /// normalized by the already recalibrated layers before it.
    pub fn recalibrate(
        &mut self,
        batches: usize,
        batch: impl Fn(usize) -> Result<Tensor<T>>,
    ) -> Result<()> {
        for k in 0..self.layers.len() {
            if !self.layers[k].keeps_statistics() {
                continue;
            }
            let (mut sum, mut sum_sq, mut count) = (Vec::new(), Vec::new(), 0usize);
            for b in 0..batches {
                let mut h = batch(b)?;
                for layer in &self.layers[..k] {
                    h = layer.infer(&h)?;
                }
                let c = *h.shape().last().unwrap_or(&1);
                if sum.is_empty() {
                    (sum, sum_sq) = (vec![0.0f64; c], vec![0.0f64; c]);
                }
                for row in h.data().chunks_exact(c) {
                    for i in 0..c {
                        let v = row[i].as_f64();
                        sum[i] += v;
                        sum_sq[i] += v * v;
                    }
                }
                count += h.len() / c;
            }
            if count == 0 {
                return Err(Error::InvalidArgument(
                    "recalibration needs at least one sample".into(),
                ));
            }
            let n = count as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let var: Vec<f64> = sum_sq
                .iter()
                .zip(&mean)
                .map(|(q, m)| (q / n - m * m).max(0.0))
                .collect();
            self.layers[k].set_running_statistics(&mean, &var)?;
        }
        Ok(())
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut iter = self.layers.iter_mut().rev();
        let Some(last) = iter.next() else {
            return Ok(grad.clone());
        };
        let mut g = last.backward(grad)?;
        for layer in iter {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }
}

/// Glorot-uniform initializer over a kernel shape whose last two axes are
/// the fan dimensions, as Keras does for dense and convolution kernels.
pub fn glorot_uniform<T: Real>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    let (receptive, fan_a, fan_b) = match *shape {
        [a, b] => (1, a, b),
        [.., a, b] => (shape[..shape.len() - 2].iter().product::<usize>(), a, b),
        _ => (1, 1, 1),
    };
    let limit = (6.0 / (receptive * (fan_a + fan_b)) as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| T::of(rng.uniform_range(-limit, limit)))
}
