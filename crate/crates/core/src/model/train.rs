use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::{
    kl_grads, kl_loss, reconstruction_grad, reconstruction_loss, reparameterize, total_loss,
    LossBreakdown, DEFAULT_KL_COEFFICIENT,
};
use super::Vae;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::layers::{Ctx, Mode};
use crate::tensor::optim::{RmsProp, RmsPropConfig};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub kl_coefficient: f64,
    /// Drives shuffling, dropout masks and latent noise.
    pub seed: u64,
    /// After the last epoch, replace the batch-norm moving averages with
    /// population statistics of the training images.
    pub recalibrate_statistics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            optimizer: RmsPropConfig::default(),
            kl_coefficient: DEFAULT_KL_COEFFICIENT,
            seed: 0,
            recalibrate_statistics: true,
        }
    }
}

/// Sample-weighted mean losses over one epoch. Epochs count from 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub reconstruction_loss: f64,
    pub kl_loss: f64,
    pub total_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Loss of every optimizer step, in order.
    pub steps: Vec<LossBreakdown>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_history_csv(path, &self.epochs)
    }
}

pub fn write_history_csv(path: impl AsRef<Path>, records: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains `vae` in place on `images` (`N×H×W×1`, values in `[0, 1]`).
pub fn train(
    vae: &mut Vae<f32>,
    images: &Tensor<f32>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    train_with_progress(vae, images, config, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with_progress(
    vae: &mut Vae<f32>,
    images: &Tensor<f32>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let n = images.batch();
    if n == 0 {
        return Err(Error::InvalidArgument("no training images".into()));
    }
    let mut root = Rng::with_stream(config.seed, 1);
    let mut order_rng = root.fork();
    let mut noise_rng = root.fork();
    let mut dropout_rng = root.fork();
    let mut optimizer = RmsProp::new(config.optimizer);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n).collect();
    let latent = vae.latent_dim();

    for epoch in 1..=config.epochs {
        order_rng.shuffle(&mut order);
        let (mut rec_sum, mut kl_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = images.gather_batch(chunk)?;
            let b = chunk.len();
            let eps = Tensor::from_fn(vec![b, latent], |_| noise_rng.normal() as f32);
            vae.zero_grads();
            let mut ctx = Ctx::new(Mode::Train, &mut dropout_rng);
            let losses = batch_gradients(vae, &x, &eps, config.kl_coefficient, &mut ctx).map_err(
                |e| match e {
                    Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    },
                    e => e,
                },
            )?;
            optimizer.step(vae.params_mut())?;

            let w = b as f64;
            rec_sum += losses.reconstruction_loss * w;
            kl_sum += losses.kl_loss * w;
            total_sum += losses.total_loss * w;
            history.steps.push(losses);
        }
        let record = EpochRecord {
            epoch,
            reconstruction_loss: rec_sum / n as f64,
            kl_loss: kl_sum / n as f64,
            total_loss: total_sum / n as f64,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    if config.recalibrate_statistics && config.epochs > 0 {
        vae.recalibrate_statistics(images, config.batch_size)?;
    }
    Ok(history)
}

/// One forward and backward pass over `x` with latent noise `eps`
/// (`N×latent_dim`). Parameter gradients are accumulated, not reset.
pub fn batch_gradients<T: Real>(
    vae: &mut Vae<T>,
    x: &Tensor<T>,
    eps: &Tensor<T>,
    kl_coefficient: f64,
    ctx: &mut Ctx<'_>,
) -> Result<LossBreakdown> {
    let enc = vae.encode_recorded(x, ctx)?;
    let z = reparameterize(&enc.z_mean, &enc.z_log_var, eps)?;
    let y_hat = vae.decode_recorded(&z, ctx)?;
    let losses = total_loss(
        reconstruction_loss(x, &y_hat)?,
        kl_loss(&enc.z_mean, &enc.z_log_var)?,
        kl_coefficient,
    );
    if !losses.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }

    let dz = vae.backward_decoder(&reconstruction_grad(x, &y_hat)?)?;
    let (kl_dm, kl_dlv) = kl_grads(&enc.z_mean, &enc.z_log_var)?;
    let coef = T::of(kl_coefficient);
    let half = T::of(0.5);
    let mut d_mean = dz.clone();
    let mut d_log_var = dz;
    for i in 0..d_mean.len() {
        let g = d_mean.data()[i];
        let lv = enc.z_log_var.data()[i];
        d_mean.data_mut()[i] = g + coef * kl_dm.data()[i];
        d_log_var.data_mut()[i] =
            g * half * (half * lv).exp() * eps.data()[i] + coef * kl_dlv.data()[i];
    }
    vae.backward_encoder(&d_mean, &d_log_var)?;
    Ok(losses)
}
