//! Latent-space tooling: embeddings, class centroids, morphs, boundary
//! probes, montages and distribution exports.

mod explore;
mod montage;
mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use explore::{
    boundary_grid, decode_points, morph, subtype_pairs, MorphTrack, BOUNDARY_MAGNITUDES,
    DEFAULT_MORPH_STEPS,
};
pub use montage::{montage, SEPARATOR_VALUE};
pub use stats::{
    histogram, histogram_dim, scatter_dims, write_scatter_csv, Histogram, ScatterPoint,
    DEFAULT_HISTOGRAM_BINS,
};

use crate::dataset::Subtype;
use crate::error::{Error, Result};
use crate::model::Vae;
use crate::tensor::Tensor;

/// Images are pushed through the encoder in chunks of this size.
pub const EMBED_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub sample_id: usize,
    pub label: u8,
    pub z_mean: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub checkpoint_id: String,
    pub latent_dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

/// Inference-mode `z_mean` for each image, one row per sample in input order.
pub fn embed_images(
    vae: &Vae<f32>,
    images: &Tensor<f32>,
    labels: &[u8],
    checkpoint_id: &str,
) -> Result<EmbeddingTable> {
    let n = images.batch();
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "embed",
            dim: "label count",
            expected: n,
            found: labels.len(),
        });
    }
    let d = vae.latent_dim();
    let mut rows = Vec::with_capacity(n);
    for start in (0..n).step_by(EMBED_BATCH) {
        let end = (start + EMBED_BATCH).min(n);
        let enc = vae.encode(&images.slice_batch(start, end)?)?;
        for (k, z) in enc.z_mean.data().chunks_exact(d).enumerate() {
            let id = start + k;
            rows.push(EmbeddingRow {
                sample_id: id,
                label: labels[id],
                z_mean: z.iter().map(|&v| v as f64).collect(),
            });
        }
    }
    Ok(EmbeddingTable {
        checkpoint_id: checkpoint_id.to_string(),
        latent_dim: d,
        rows,
    })
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Labels present in the table, ascending.
    pub fn labels(&self) -> Vec<u8> {
        let mut l: Vec<u8> = self.rows.iter().map(|r| r.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    /// Columns `sample_id,label,z0,…,z{d-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend((0..self.latent_dim).map(|i| format!("z{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.sample_id.to_string(), r.label.to_string()];
            rec.extend(r.z_mean.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read_csv(path: impl AsRef<Path>, checkpoint_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let latent_dim = r.headers()?.len().saturating_sub(2);
        let bad = |reason: String| Error::DatasetEntry {
            path: path.to_path_buf(),
            reason,
        };
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let parse_err = |e: &dyn std::fmt::Display| bad(format!("row {}: {e}", rows.len() + 1));
            let sample_id = field(0).parse().map_err(|e| parse_err(&e))?;
            let label: u8 = field(1).parse().map_err(|e| parse_err(&e))?;
            let z_mean = (2..2 + latent_dim)
                .map(|i| field(i).parse::<f64>().map_err(|e| parse_err(&e)))
                .collect::<Result<Vec<_>>>()?;
            rows.push(EmbeddingRow {
                sample_id,
                label,
                z_mean,
            });
        }
        Ok(EmbeddingTable {
            checkpoint_id: checkpoint_id.to_string(),
            latent_dim,
            rows,
        })
    }
}

/// Arithmetic mean of `z_mean` for each requested label.
pub fn centroids(table: &EmbeddingTable, labels: &[u8]) -> Result<BTreeMap<u8, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for &label in labels {
        let mut sum = vec![0.0; table.latent_dim];
        let mut count = 0usize;
        for r in table.rows.iter().filter(|r| r.label == label) {
            for (s, &v) in sum.iter_mut().zip(&r.z_mean) {
                *s += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyClass(label));
        }
        out.insert(label, sum.into_iter().map(|s| s / count as f64).collect());
    }
    Ok(out)
}

/// The on-disk centroid table, `{checkpoint_id, labels: {name: z}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidFile {
    pub checkpoint_id: String,
    pub labels: BTreeMap<String, Vec<f64>>,
}

impl CentroidFile {
    pub fn new(checkpoint_id: &str, centroids: &BTreeMap<u8, Vec<f64>>) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (&label, z) in centroids {
            let subtype = Subtype::from_label(label)
                .ok_or_else(|| Error::InvalidArgument(format!("label {label} outside 0..8")))?;
            labels.insert(subtype.name().to_string(), z.clone());
        }
        Ok(CentroidFile {
            checkpoint_id: checkpoint_id.to_string(),
            labels,
        })
    }

    pub fn get(&self, subtype: Subtype) -> Result<&[f64]> {
        self.labels
            .get(subtype.name())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::EmptyClass(subtype.label()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
