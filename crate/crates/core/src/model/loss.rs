use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPSILON: f64 = 2e-7;

/// Default weight of the KL term in the total loss.
pub const DEFAULT_KL_COEFFICIENT: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction_loss: f64,
    pub kl_loss: f64,
    pub total_loss: f64,
    pub coefficient: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.reconstruction_loss.is_finite()
            && self.kl_loss.is_finite()
            && self.total_loss.is_finite()
    }
}

pub fn total_loss(reconstruction: f64, kl: f64, coefficient: f64) -> LossBreakdown {
    LossBreakdown {
        reconstruction_loss: reconstruction,
        kl_loss: kl,
        total_loss: reconstruction + coefficient * kl,
        coefficient,
    }
}

/// `z = μ + exp(½·log σ²)·ε`, elementwise.
pub fn reparameterize<T: Real>(
    z_mean: &Tensor<T>,
    z_log_var: &Tensor<T>,
    epsilon: &Tensor<T>,
) -> Result<Tensor<T>> {
    z_mean.expect_same_shape(z_log_var, "reparameterize")?;
    z_mean.expect_same_shape(epsilon, "reparameterize")?;
    let half = T::of(0.5);
    let data = z_mean
        .data()
        .iter()
        .zip(z_log_var.data())
        .zip(epsilon.data())
        .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
        .collect();
    Tensor::new(z_mean.shape().to_vec(), data)
}

fn clamp_prediction(p: f64) -> f64 {
    p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
}

/// Binary cross-entropy averaged over pixels, then over the batch. With a
/// fixed per-sample pixel count this is the mean over every element.
pub fn reconstruction_loss<T: Real>(y: &Tensor<T>, y_hat: &Tensor<T>) -> Result<f64> {
    y.expect_same_shape(y_hat, "reconstruction_loss")?;
    if y.is_empty() {
        return Err(Error::InvalidArgument(
            "reconstruction loss of an empty batch".into(),
        ));
    }
    let sum: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&t, &p)| {
            let (t, p) = (t.as_f64(), clamp_prediction(p.as_f64()));
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / y.len() as f64)
}

/// Gradient of [`reconstruction_loss`] with respect to `y_hat`.
///
/// The clamp only guards the denominators: a saturated pixel keeps the
/// gradient it would have at the clamp boundary instead of losing it.
pub fn reconstruction_grad<T: Real>(y: &Tensor<T>, y_hat: &Tensor<T>) -> Result<Tensor<T>> {
    y.expect_same_shape(y_hat, "reconstruction_grad")?;
    let scale = 1.0 / y.len() as f64;
    let data = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&t, &p)| {
            let (t, p) = (t.as_f64(), clamp_prediction(p.as_f64()));
            T::of(scale * (-t / p + (1.0 - t) / (1.0 - p)))
        })
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

/// Per-element KL terms `−½·(1 + log σ² − μ² − σ²)`.
pub fn kl_terms<T: Real>(z_mean: &Tensor<T>, z_log_var: &Tensor<T>) -> Result<Vec<f64>> {
    z_mean.expect_same_shape(z_log_var, "kl_loss")?;
    Ok(z_mean
        .data()
        .iter()
        .zip(z_log_var.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m.as_f64(), lv.as_f64());
            -0.5 * (1.0 + lv - m * m - lv.exp())
        })
        .collect())
}

/// KL divergence to the standard normal, averaged over latent dimensions,
/// then over the batch.
pub fn kl_loss<T: Real>(z_mean: &Tensor<T>, z_log_var: &Tensor<T>) -> Result<f64> {
    let terms = kl_terms(z_mean, z_log_var)?;
    if terms.is_empty() {
        return Err(Error::InvalidArgument("KL loss of an empty batch".into()));
    }
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Gradients of [`kl_loss`] with respect to `z_mean` and `z_log_var`.
pub fn kl_grads<T: Real>(
    z_mean: &Tensor<T>,
    z_log_var: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    z_mean.expect_same_shape(z_log_var, "kl_grads")?;
    let scale = 1.0 / z_mean.len() as f64;
    let d_mean = z_mean.map(|m| T::of(scale * m.as_f64()));
    let d_log_var = z_log_var.map(|lv| T::of(scale * 0.5 * (lv.as_f64().exp() - 1.0)));
    Ok((d_mean, d_log_var))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn zero_noise_returns_mean() {
        let z = reparameterize(&t(&[1.5, -2.0]), &t(&[0.3, 4.0]), &t(&[0.0, 0.0])).unwrap();
        assert_eq!(z.data(), &[1.5, -2.0]);
        let z = reparameterize(&t(&[0.0]), &t(&[0.0]), &t(&[0.7])).unwrap();
        assert_eq!(z.data(), &[0.7]);
    }

    #[test]
    fn perfect_binary_reconstruction_is_clamp_residue() {
        let y = t(&[0.0, 1.0, 1.0, 0.0]);
        assert!(reconstruction_loss(&y, &y).unwrap() <= 3e-7);
    }

    #[test]
    fn kl_of_prior_is_zero() {
        assert_eq!(kl_loss(&t(&[0.0, 0.0]), &t(&[0.0, 0.0])).unwrap(), 0.0);
        assert!((kl_loss(&t(&[1.0]), &t(&[0.0])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn total_is_linear_in_coefficient() {
        assert_eq!(total_loss(1.2, 0.0, 0.001).total_loss, 1.2);
        assert_eq!(total_loss(1.2, 50.0, 0.0).total_loss, 1.2);
        let a = total_loss(1.0, 3.0, 0.5).total_loss;
        let b = total_loss(1.0, 3.0, 1.0).total_loss;
        assert!(((b - 1.0) - 2.0 * (a - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(reconstruction_loss(&t(&[0.0]), &t(&[0.0, 1.0])).is_err());
    }
}
