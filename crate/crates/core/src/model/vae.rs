use super::ArchitectureProfile;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::layers::{
    Activation, ActivationKind, BatchNorm, Conv2d, ConvTranspose2d, Ctx, Dense, Dropout, Flatten,
    Layer, Param, Reshape, Sequential,
};
use crate::tensor::{Real, Tensor};

/// Mean and natural-log variance of each sample's latent normal, both `N×latent_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<T = f32> {
    pub z_mean: Tensor<T>,
    pub z_log_var: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryRow {
    pub name: String,
    pub kind: String,
    /// Output shape without the batch dimension.
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSummary {
    pub rows: Vec<SummaryRow>,
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

impl ModelSummary {
    fn from_rows<'a, T: Real + 'a>(
        rows: Vec<SummaryRow>,
        params: impl IntoIterator<Item = &'a Param<T>>,
    ) -> Self {
        let (mut trainable, mut non_trainable) = (0, 0);
        for p in params {
            if p.trainable {
                trainable += p.count();
            } else {
                non_trainable += p.count();
            }
        }
        ModelSummary {
            rows,
            total: trainable + non_trainable,
            trainable,
            non_trainable,
        }
    }
}

fn keras_name(base: &str, index: usize) -> String {
    if index == 0 {
        base.to_string()
    } else {
        format!("{base}_{index}")
    }
}

/// Convolutional variational autoencoder.
///
/// Encoder: `stages × (conv s2 → batch-norm → relu → dropout) → flatten`,
/// then two parallel linear heads for `z_mean` and `z_log_var`.
/// Decoder: linear layer to the bottleneck volume, reshape, `stages − 1 ×
/// (conv-transpose s2 → batch-norm → relu → dropout)` and a final
/// conv-transpose with a sigmoid.
pub struct Vae<T: Real = f32> {
    profile: ArchitectureProfile,
    trunk: Sequential<T>,
    z_mean: Dense<T>,
    z_log_var: Dense<T>,
    decoder: Sequential<T>,
}

impl<T: Real> Vae<T> {
    pub fn new(profile: ArchitectureProfile, seed: u64) -> Result<Self> {
        profile.validate()?;
        let mut rng = Rng::new(seed);
        let k = profile.kernel_size;
        let s = profile.stride;
        let stages = profile.stages();
        let bn = profile.batch_norm;

        let mut trunk = Sequential::new();
        let mut cin = 1;
        for (i, &cout) in profile.channels.iter().enumerate() {
            trunk.push(Conv2d::new(
                keras_name("conv2d", i),
                cin,
                cout,
                k,
                s,
                &mut rng,
            ));
            trunk.push(BatchNorm::new(
                keras_name("batch_normalization", i),
                cout,
                bn,
            ));
            trunk.push(Activation::new(
                keras_name("activation", i),
                ActivationKind::Relu,
            ));
            trunk.push(Dropout::new(keras_name("dropout", i), profile.dropout_rate));
            cin = cout;
        }
        trunk.push(Flatten::new("flatten"));
        let (bh, bw, bc) = profile.bottleneck();
        let flat = bh * bw * bc;
        let z_mean = Dense::new("dense", flat, profile.latent_dim, &mut rng);
        let z_log_var = Dense::new("dense_1", flat, profile.latent_dim, &mut rng);

        let mut decoder = Sequential::new();
        decoder.push(Dense::new("dense_2", profile.latent_dim, flat, &mut rng));
        decoder.push(Reshape::new("reshape", vec![bh, bw, bc]));
        let mut cin = bc;
        for i in 0..stages - 1 {
            let cout = profile.channels[stages - 2 - i];
            let idx = stages + i;
            decoder.push(ConvTranspose2d::new(
                keras_name("conv2d_transpose", i),
                cin,
                cout,
                k,
                s,
                &mut rng,
            ));
            decoder.push(BatchNorm::new(
                keras_name("batch_normalization", idx),
                cout,
                bn,
            ));
            decoder.push(Activation::new(
                keras_name("activation", idx),
                ActivationKind::Relu,
            ));
            decoder.push(Dropout::new(
                keras_name("dropout", idx),
                profile.dropout_rate,
            ));
            cin = cout;
        }
        decoder.push(
            ConvTranspose2d::new(
                keras_name("conv2d_transpose", stages - 1),
                cin,
                1,
                k,
                s,
                &mut rng,
            )
            .with_sigmoid(),
        );

        Ok(Vae {
            profile,
            trunk,
            z_mean,
            z_log_var,
            decoder,
        })
    }

    pub fn profile(&self) -> &ArchitectureProfile {
        &self.profile
    }

    /// Encoder layers up to and including the flatten.
    pub fn encoder_trunk(&self) -> &Sequential<T> {
        &self.trunk
    }

    /// The `z_mean` and `z_log_var` heads.
    pub fn encoder_heads(&self) -> (&Dense<T>, &Dense<T>) {
        (&self.z_mean, &self.z_log_var)
    }

    pub fn decoder_layers(&self) -> &Sequential<T> {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.profile.latent_dim
    }

    fn check_images(&self, images: &Tensor<T>) -> Result<()> {
        let (_, h, w, c) = images.dims4("encode")?;
        for (dim, expected, found) in [
            ("image height", self.profile.image_height, h),
            ("image width", self.profile.image_width, w),
            ("image channels", 1, c),
        ] {
            if expected != found {
                return Err(Error::ShapeMismatch {
                    op: "encode",
                    dim,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    fn check_latent(&self, z: &Tensor<T>) -> Result<()> {
        let (_, d) = z.dims2("decode")?;
        if d != self.profile.latent_dim {
            return Err(Error::ShapeMismatch {
                op: "decode",
                dim: "latent dimension",
                expected: self.profile.latent_dim,
                found: d,
            });
        }
        Ok(())
    }

    /// Inference-mode encoding: moving batch-norm statistics, no dropout.
    pub fn encode(&self, images: &Tensor<T>) -> Result<EncoderOutput<T>> {
        self.check_images(images)?;
        let h = self.trunk.infer(images)?;
        Ok(EncoderOutput {
            z_mean: self.z_mean.infer(&h)?,
            z_log_var: self.z_log_var.infer(&h)?,
        })
    }

    /// Inference-mode decoding. Each sample is computed independently, so
    /// a point decodes to the same bytes alone or inside any batch.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_latent(z)?;
        self.decoder.infer(z)
    }

    /// Encoding that records activations for [`Vae::backward_encoder`].
    pub fn encode_recorded(
        &mut self,
        images: &Tensor<T>,
        ctx: &mut Ctx<'_>,
    ) -> Result<EncoderOutput<T>> {
        self.check_images(images)?;
        let h = self.trunk.forward(images, ctx)?;
        Ok(EncoderOutput {
            z_mean: self.z_mean.forward(&h, ctx)?,
            z_log_var: self.z_log_var.forward(&h, ctx)?,
        })
    }

    /// Decoding that records activations for [`Vae::backward_decoder`].
    pub fn decode_recorded(&mut self, z: &Tensor<T>, ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        self.check_latent(z)?;
        self.decoder.forward(z, ctx)
    }

    /// Gradient with respect to `z` given the gradient of the decoded images.
    pub fn backward_decoder(&mut self, grad_images: &Tensor<T>) -> Result<Tensor<T>> {
        self.decoder.backward(grad_images)
    }

    /// Gradient with respect to the input images given gradients of both heads.
    pub fn backward_encoder(
        &mut self,
        d_mean: &Tensor<T>,
        d_log_var: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut g = self.z_mean.backward(d_mean)?;
        let g2 = self.z_log_var.backward(d_log_var)?;
        for (a, &b) in g.data_mut().iter_mut().zip(g2.data()) {
            *a += b;
        }
        self.trunk.backward(&g)
    }

    /// Encoder then decoder parameters, in a stable order.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.encoder_params();
        out.extend(self.decoder.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.trunk.params_mut();
        out.extend(self.z_mean.params_mut());
        out.extend(self.z_log_var.params_mut());
        out.extend(self.decoder.params_mut());
        out
    }

    fn encoder_params(&self) -> Vec<&Param<T>> {
        let mut out = self.trunk.params();
        out.extend(self.z_mean.params());
        out.extend(self.z_log_var.params());
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.count()).sum()
    }

    /// Replaces every batch-norm layer's moving statistics with population
    /// statistics over `images`, fed in batches of `batch_size`. The decoder
    /// is calibrated on the latent means of the recalibrated encoder.
    pub fn recalibrate_statistics(&mut self, images: &Tensor<T>, batch_size: usize) -> Result<()> {
        self.check_images(images)?;
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let n = images.batch();
        let batches = n.div_ceil(batch_size);
        let range = move |b: usize| (b * batch_size, ((b + 1) * batch_size).min(n));
        self.trunk.recalibrate(batches, |b| {
            let (lo, hi) = range(b);
            images.slice_batch(lo, hi)
        })?;
        let z: Vec<Tensor<T>> = (0..batches)
            .map(|b| {
                let (lo, hi) = range(b);
                Ok(self.encode(&images.slice_batch(lo, hi)?)?.z_mean)
            })
            .collect::<Result<_>>()?;
        self.decoder.recalibrate(batches, |b| Ok(z[b].clone()))
    }

    /// Marks every batch-norm layer's moving statistics as usable, e.g.
    /// after they were restored from a checkpoint.
    pub fn mark_statistics(&mut self) {
        for layer in self.trunk.layers_mut() {
            layer.restore_statistics();
        }
        for layer in self.decoder.layers_mut() {
            layer.restore_statistics();
        }
    }

    pub fn encoder_summary(&self) -> Result<ModelSummary> {
        let p = &self.profile;
        let mut shape = vec![p.image_height, p.image_width, 1];
        let mut rows = vec![SummaryRow {
            name: "input_1".into(),
            kind: "InputLayer".into(),
            output_shape: shape.clone(),
            params: 0,
        }];
        for layer in self.trunk.layers() {
            shape = layer.output_shape(&shape)?;
            rows.push(row(layer.as_ref(), &shape));
        }
        for head in [&self.z_mean, &self.z_log_var] {
            let out = head.output_shape(&shape)?;
            rows.push(row(head, &out));
        }
        Ok(ModelSummary::from_rows(rows, self.encoder_params()))
    }

    pub fn decoder_summary(&self) -> Result<ModelSummary> {
        let mut shape = vec![self.profile.latent_dim];
        let mut rows = vec![SummaryRow {
            name: "input_2".into(),
            kind: "InputLayer".into(),
            output_shape: shape.clone(),
            params: 0,
        }];
        for layer in self.decoder.layers() {
            shape = layer.output_shape(&shape)?;
            rows.push(row(layer.as_ref(), &shape));
        }
        Ok(ModelSummary::from_rows(rows, self.decoder.params()))
    }
}

fn row<T: Real>(layer: &dyn Layer<T>, shape: &[usize]) -> SummaryRow {
    SummaryRow {
        name: layer.name().to_string(),
        kind: layer.kind().to_string(),
        output_shape: shape.to_vec(),
        params: layer.params().iter().map(|p| p.count()).sum(),
    }
}
