use serde::{Deserialize, Serialize};

use super::{not_run, Ctx, Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormConfig {
    pub epsilon: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            epsilon: 1e-3,
            momentum: 0.99,
        }
    }
}

/// Per-channel normalization over every axis but the last.
///
/// `moving_mean` and `moving_var` are non-trainable. A fresh layer has no
/// statistics until a training pass records them (or they are loaded or set),
/// and inference refuses to run before that.
pub struct BatchNorm<T: Real = f32> {
    name: String,
    config: BatchNormConfig,
    gamma: Param<T>,
    beta: Param<T>,
    moving_mean: Param<T>,
    moving_var: Param<T>,
    has_statistics: bool,
    cache: Option<Cache<T>>,
}

struct Cache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: impl Into<String>, channels: usize, config: BatchNormConfig) -> Self {
        let name = name.into();
        BatchNorm {
            gamma: Param::new(
                format!("{name}/gamma"),
                Tensor::full(vec![channels], T::one()),
                true,
            ),
            beta: Param::new(format!("{name}/beta"), Tensor::zeros(vec![channels]), true),
            moving_mean: Param::new(
                format!("{name}/moving_mean"),
                Tensor::zeros(vec![channels]),
                false,
            ),
            moving_var: Param::new(
                format!("{name}/moving_variance"),
                Tensor::full(vec![channels], T::one()),
                false,
            ),
            name,
            config,
            has_statistics: false,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.count()
    }

    pub fn has_statistics(&self) -> bool {
        self.has_statistics
    }

    /// Marks the current moving statistics as valid, e.g. after loading.
    pub fn mark_statistics(&mut self) {
        self.has_statistics = true;
    }

    pub fn set_statistics(&mut self, mean: &[T], var: &[T]) -> Result<()> {
        for (slice, what) in [
            (mean, "moving mean length"),
            (var, "moving variance length"),
        ] {
            if slice.len() != self.channels() {
                return Err(Error::ShapeMismatch {
                    op: "batch_norm",
                    dim: what,
                    expected: self.channels(),
                    found: slice.len(),
                });
            }
        }
        if var.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidArgument(
                "moving variance must be non-negative".into(),
            ));
        }
        self.moving_mean.value.data_mut().copy_from_slice(mean);
        self.moving_var.value.data_mut().copy_from_slice(var);
        self.has_statistics = true;
        Ok(())
    }

    pub fn moving_mean(&self) -> &[T] {
        self.moving_mean.value.data()
    }

    pub fn moving_var(&self) -> &[T] {
        self.moving_var.value.data()
    }

    fn check_channels(&self, x: &Tensor<T>) -> Result<usize> {
        let c = *x.shape().last().unwrap_or(&0);
        if c != self.channels() {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                dim: "channels",
                expected: self.channels(),
                found: c,
            });
        }
        Ok(c)
    }

    fn inference_scale(&self) -> Result<Vec<T>> {
        if !self.has_statistics {
            return Err(Error::MissingStatistics {
                layer: self.name.clone(),
            });
        }
        let eps = T::of(self.config.epsilon);
        Ok(self
            .moving_var
            .value
            .data()
            .iter()
            .map(|&v| T::one() / (v + eps).sqrt())
            .collect())
    }

    fn batch_statistics(&self, x: &[T], c: usize) -> (Vec<f64>, Vec<f64>) {
        let count = (x.len() / c) as f64;
        let mut mean = vec![0.0; c];
        for row in x.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for row in x.chunks_exact(c) {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.as_f64() - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= count);
        (mean, var)
    }
}

impl<T: Real> Layer<T> for BatchNorm<T> {
    fn restore_statistics(&mut self) {
        self.mark_statistics();
    }

    fn keeps_statistics(&self) -> bool {
        true
    }

    fn set_running_statistics(&mut self, mean: &[f64], var: &[f64]) -> Result<()> {
        let cast = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        self.set_statistics(&cast(mean), &cast(var))
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "BatchNormalization"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let c = self.check_channels(x)?;
        let (shift, inv_std): (Vec<T>, Vec<T>) = match ctx.mode {
            Mode::Infer => (
                self.moving_mean.value.data().to_vec(),
                self.inference_scale()?,
            ),
            Mode::Train => {
                let (mean, var) = self.batch_statistics(x.data(), c);
                let m = self.config.momentum;
                let eps = self.config.epsilon;
                for i in 0..c {
                    let mm = &mut self.moving_mean.value.data_mut()[i];
                    *mm = T::of(mm.as_f64() * m + mean[i] * (1.0 - m));
                    let mv = &mut self.moving_var.value.data_mut()[i];
                    *mv = T::of(mv.as_f64() * m + var[i] * (1.0 - m));
                }
                self.has_statistics = true;
                (
                    mean.iter().map(|&v| T::of(v)).collect(),
                    var.iter().map(|&v| T::of(1.0 / (v + eps).sqrt())).collect(),
                )
            }
        };
        let mut normalized = x.data().to_vec();
        for row in normalized.chunks_exact_mut(c) {
            for i in 0..c {
                row[i] = (row[i] - shift[i]) * inv_std[i];
            }
        }
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut out = normalized.clone();
        for row in out.chunks_exact_mut(c) {
            for i in 0..c {
                row[i] = row[i] * gamma[i] + beta[i];
            }
        }
        self.cache = Some(Cache {
            normalized,
            inv_std,
            mode: ctx.mode,
        });
        Tensor::new(x.shape().to_vec(), out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.check_channels(x)?;
        let inv_std = self.inference_scale()?;
        let mean = self.moving_mean.value.data();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut out = x.data().to_vec();
        for row in out.chunks_exact_mut(c) {
            for i in 0..c {
                row[i] = (row[i] - mean[i]) * inv_std[i] * gamma[i] + beta[i];
            }
        }
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| not_run(&self.name))?;
        let c = self.channels();
        if dy.len() != cache.normalized.len() {
            return Err(Error::ShapeMismatch {
                op: "batch_norm backward",
                dim: "upstream gradient length",
                expected: cache.normalized.len(),
                found: dy.len(),
            });
        }
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (g_row, x_row) in dy
            .data()
            .chunks_exact(c)
            .zip(cache.normalized.chunks_exact(c))
        {
            for i in 0..c {
                sum_dy[i] += g_row[i].as_f64();
                sum_dy_xhat[i] += (g_row[i] * x_row[i]).as_f64();
            }
        }
        for i in 0..c {
            self.gamma.grad.data_mut()[i] += T::of(sum_dy_xhat[i]);
            self.beta.grad.data_mut()[i] += T::of(sum_dy[i]);
        }
        let gamma = self.gamma.value.data();
        let mut dx = dy.data().to_vec();
        match cache.mode {
            Mode::Infer => {
                for row in dx.chunks_exact_mut(c) {
                    for i in 0..c {
                        row[i] *= gamma[i] * cache.inv_std[i];
                    }
                }
            }
            Mode::Train => {
                let count = (dx.len() / c) as f64;
                let mean_dy: Vec<T> = sum_dy.iter().map(|&s| T::of(s / count)).collect();
                let mean_dy_xhat: Vec<T> = sum_dy_xhat.iter().map(|&s| T::of(s / count)).collect();
                for (row, x_row) in dx.chunks_exact_mut(c).zip(cache.normalized.chunks_exact(c)) {
                    for i in 0..c {
                        row[i] = gamma[i]
                            * cache.inv_std[i]
                            * (row[i] - mean_dy[i] - x_row[i] * mean_dy_xhat[i]);
                    }
                }
            }
        }
        Tensor::new(dy.shape().to_vec(), dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.moving_mean, &self.moving_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.moving_mean,
            &mut self.moving_var,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn channel_moments(t: &Tensor<f64>, c: usize) -> Vec<(f64, f64)> {
        (0..c)
            .map(|ch| {
                let vals: Vec<f64> = t.data().iter().skip(ch).step_by(c).copied().collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                (mean, var)
            })
            .collect()
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = Rng::new(1);
        let x = Tensor::<f64>::from_fn(vec![4, 16, 16, 3], |i| {
            rng.normal() * (1.0 + (i % 3) as f64) + 5.0
        });
        let mut bn = BatchNorm::new("bn", 3, BatchNormConfig::default());
        let y = bn
            .forward(&x, &mut Ctx::new(Mode::Train, &mut rng))
            .unwrap();
        for (mean, var) in channel_moments(&y, 3) {
            assert!(mean.abs() < 1e-5, "{mean}");
            // epsilon 1e-3 shrinks the variance by var/(var+eps).
            assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut rng = Rng::new(2);
        let x = Tensor::<f64>::full(vec![2, 4, 4, 1], 3.5);
        let mut bn = BatchNorm::new("bn", 1, BatchNormConfig::default());
        bn.beta.value.data_mut()[0] = 0.25;
        let y = bn
            .forward(&x, &mut Ctx::new(Mode::Train, &mut rng))
            .unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn infer_requires_statistics() {
        let bn = BatchNorm::<f32>::new("bn_x", 2, BatchNormConfig::default());
        let err = bn.infer(&Tensor::zeros(vec![1, 2])).unwrap_err();
        assert!(matches!(err, Error::MissingStatistics { ref layer } if layer == "bn_x"));
    }

    #[test]
    fn identity_statistics_pass_through() {
        let mut bn = BatchNorm::<f64>::new("bn", 2, BatchNormConfig::default());
        bn.set_statistics(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let x = Tensor::from_fn(vec![3, 2], |i| i as f64 - 2.0);
        let y = bn.infer(&x).unwrap();
        let scale = 1.0 / (1.0f64 + 1e-3).sqrt();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a * scale - b).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_statistics_track_batches() {
        let mut rng = Rng::new(4);
        let x = Tensor::<f64>::full(vec![8, 1], 2.0);
        let mut bn = BatchNorm::new("bn", 1, BatchNormConfig::default());
        bn.forward(&x, &mut Ctx::new(Mode::Train, &mut rng))
            .unwrap();
        assert!((bn.moving_mean()[0] - 0.02).abs() < 1e-12);
        assert!((bn.moving_var()[0] - 0.99).abs() < 1e-12);
        assert!(!bn.params()[2].trainable && !bn.params()[3].trainable);
    }
}
