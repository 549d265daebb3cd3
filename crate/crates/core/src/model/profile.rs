use serde::{Deserialize, Serialize};

use crate::dataset::CanvasSize;
use crate::error::{Error, Result};
use crate::tensor::layers::BatchNormConfig;

/// Architecture constants for the encoder/decoder pair.
///
/// The full profile reproduces the published layer tables for 128×512
/// inputs; the desk profile is the same network at 64×256 for fast runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureProfile {
    pub image_height: usize,
    pub image_width: usize,
    pub latent_dim: usize,
    /// Encoder conv channels; the decoder mirrors them.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub dropout_rate: f64,
    pub batch_norm: BatchNormConfig,
}

impl ArchitectureProfile {
    pub fn full() -> Self {
        ArchitectureProfile {
            image_height: 128,
            image_width: 512,
            latent_dim: 8,
            channels: vec![64, 128, 128, 128, 128],
            kernel_size: 3,
            stride: 2,
            dropout_rate: 0.25,
            batch_norm: BatchNormConfig::default(),
        }
    }

    pub fn desk() -> Self {
        ArchitectureProfile {
            image_height: 64,
            image_width: 256,
            ..Self::full()
        }
    }

    pub fn canvas(&self) -> CanvasSize {
        CanvasSize {
            width: self.image_width,
            height: self.image_height,
        }
    }

    pub fn stages(&self) -> usize {
        self.channels.len()
    }

    /// Spatial size after the last encoder stage, `(h, w, c)`.
    pub fn bottleneck(&self) -> (usize, usize, usize) {
        let f = self.stride.pow(self.stages() as u32);
        (
            self.image_height / f,
            self.image_width / f,
            *self.channels.last().unwrap_or(&0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "latent_dim must be at least 1".into(),
            ));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(
                "channel plan must be non-empty and positive".into(),
            ));
        }
        if self.stride < 1 || self.kernel_size < 1 {
            return Err(Error::InvalidArgument(
                "kernel size and stride must be positive".into(),
            ));
        }
        let f = self.stride.pow(self.stages() as u32);
        for (what, size) in [("height", self.image_height), ("width", self.image_width)] {
            if size == 0 || size % f != 0 {
                return Err(Error::InvalidArgument(format!(
                    "image {what} {size} is not divisible by {f} ({} stride-{} stages)",
                    self.stages(),
                    self.stride
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_bottleneck() {
        assert_eq!(ArchitectureProfile::full().bottleneck(), (4, 16, 128));
        assert_eq!(ArchitectureProfile::desk().bottleneck(), (2, 8, 128));
    }

    #[test]
    fn indivisible_dims_rejected() {
        let mut p = ArchitectureProfile::full();
        p.image_height = 100;
        assert!(p.validate().is_err());
        p.image_height = 128;
        p.latent_dim = 0;
        assert!(p.validate().is_err());
    }
}
