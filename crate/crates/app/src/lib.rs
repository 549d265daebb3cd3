//! Command-line pipeline and HTTP inference service.

pub mod cli;
pub mod plot;
pub mod service;

use std::path::{Path, PathBuf};

use bridge_vae::dataset::Subtype;
use bridge_vae::latent::decode_points;
use bridge_vae::model::{ModelCheckpoint, Vae};
use bridge_vae::Result;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "BRIDGEVAE_THREADS";

/// File name of the centroid table stored beside a checkpoint.
pub const CENTROIDS_FILE: &str = "centroids.json";

/// A loaded checkpoint ready for inference.
pub struct Model {
    pub vae: Vae<f32>,
    pub checkpoint_id: String,
}

impl Model {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = ModelCheckpoint::load(path)?;
        Ok(Model {
            vae: ckpt.to_model()?,
            checkpoint_id: ckpt.id(),
        })
    }

    /// Decodes one latent point to PNG bytes. The CLI and the service both
    /// go through here.
    pub fn decode_png(&self, z: &[f64]) -> Result<Vec<u8>> {
        let img = decode_points(&self.vae, &[z.to_vec()])?.remove(0);
        img.to_png_bytes()
    }
}

pub fn default_centroids_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name(CENTROIDS_FILE)
}

/// Parses a comma-separated latent vector such as `0,1.5,-2,...`.
pub fn parse_vector(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|e| format!("`{}`: {e}", s.trim()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite coordinate `{}`", s.trim()))
            }
        })
        .collect()
}

/// File-name-safe form of a subtype name, e.g. `Beam-Three_span`.
pub fn file_stem(subtype: Subtype) -> String {
    subtype.name().replace(' ', "-")
}
