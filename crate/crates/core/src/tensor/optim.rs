use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-7,
        }
    }
}

/// One RMSProp update on raw slices:
/// `a ← ρ·a + (1−ρ)·g²`, `p ← p − lr·g/(√a + ε)`.
pub fn rmsprop_update<T: Real>(
    config: &RmsPropConfig,
    param: &mut [T],
    grad: &[T],
    accum: &mut [T],
) -> Result<()> {
    if grad.len() != param.len() || accum.len() != param.len() {
        return Err(Error::ShapeMismatch {
            op: "rmsprop",
            dim: "parameter length",
            expected: param.len(),
            found: if grad.len() != param.len() {
                grad.len()
            } else {
                accum.len()
            },
        });
    }
    let rho = T::of(config.rho);
    let one_minus_rho = T::of(1.0 - config.rho);
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.epsilon);
    for ((p, &g), a) in param.iter_mut().zip(grad).zip(accum.iter_mut()) {
        *a = rho * *a + one_minus_rho * g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer state: one accumulator per trainable parameter, keyed by name.
#[derive(Clone, Debug)]
pub struct RmsProp<T = f32> {
    pub config: RmsPropConfig,
    accumulators: HashMap<String, Vec<T>>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(config: RmsPropConfig) -> Self {
        RmsProp {
            config,
            accumulators: HashMap::new(),
        }
    }

    pub fn accumulator(&self, name: &str) -> Option<&[T]> {
        self.accumulators.get(name).map(Vec::as_slice)
    }

    /// Applies one step to every trainable parameter using its accumulated
    /// gradient. Non-trainable arrays are left untouched.
    pub fn step<'p>(&mut self, params: impl IntoIterator<Item = &'p mut Param<T>>) -> Result<()> {
        for p in params {
            if !p.trainable {
                continue;
            }
            let accum = self
                .accumulators
                .entry(p.name.clone())
                .or_insert_with(|| vec![T::zero(); p.value.len()]);
            rmsprop_update(&self.config, p.value.data_mut(), p.grad.data(), accum)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn hand_evaluated_step() {
        let cfg = RmsPropConfig::default();
        let mut p = [1.0f64];
        let mut a = [0.0f64];
        rmsprop_update(&cfg, &mut p, &[1.0], &mut a).unwrap();
        assert!((a[0] - 0.1).abs() < 1e-15);
        let expected = 1.0 - 0.001 / (0.1f64.sqrt() + 1e-7);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.996838).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = RmsProp::<f64>::new(RmsPropConfig::default());
        let mut param = Param::new("w", Tensor::from_fn(vec![3], |i| i as f64), true);
        opt.step([&mut param]).unwrap();
        assert_eq!(param.value.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut opt = RmsProp::<f64>::new(RmsPropConfig::default());
        let mut param = Param::new("w", Tensor::full(vec![1], 1.0), true);
        param.grad = Tensor::full(vec![1], 1.0);
        let mut last = 1.0;
        for _ in 0..2 {
            opt.step([&mut param]).unwrap();
            assert!(param.value.data()[0] < last);
            last = param.value.data()[0];
        }
        assert!(opt.accumulator("w").unwrap()[0] >= 0.0);
    }

    #[test]
    fn skips_non_trainable() {
        let mut opt = RmsProp::<f64>::new(RmsPropConfig::default());
        let mut stat = Param::new("moving_mean", Tensor::full(vec![2], 0.5), false);
        stat.grad = Tensor::full(vec![2], 9.0);
        opt.step([&mut stat]).unwrap();
        assert_eq!(stat.value.data(), &[0.5, 0.5]);
        assert!(opt.accumulator("moving_mean").is_none());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let cfg = RmsPropConfig::default();
        let mut p = [0.0f32; 3];
        let mut a = [0.0f32; 3];
        assert!(rmsprop_update(&cfg, &mut p, &[1.0, 2.0], &mut a).is_err());
    }
}
