use std::path::Path;

use serde::Serialize;

use super::EmbeddingTable;
use crate::error::{Error, Result};

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin includes its upper edge.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Standard normal density at each bin center × sample count × bin width.
    pub reference: Vec<f64>,
}

#[derive(Serialize)]
struct HistogramCsvRow {
    bin_start: f64,
    bin_end: f64,
    count: usize,
    normal_reference: f64,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Columns `bin_start,bin_end,count,normal_reference`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for (i, &count) in self.counts.iter().enumerate() {
            w.serialize(HistogramCsvRow {
                bin_start: self.edges[i],
                bin_end: self.edges[i + 1],
                count,
                normal_reference: self.reference[i],
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Equal-width bins over the data range. If every value is equal the range
/// becomes `value ± 0.5`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("histogram of no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite value {v} in histogram input"
        )));
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let n = values.len() as f64;
    let reference = edges
        .windows(2)
        .map(|e| normal_pdf(0.5 * (e[0] + e[1])) * n * (e[1] - e[0]))
        .collect();
    Ok(Histogram {
        edges,
        counts,
        reference,
    })
}

pub fn histogram_dim(table: &EmbeddingTable, dim: usize, bins: usize) -> Result<Histogram> {
    check_dim(table, dim)?;
    let values: Vec<f64> = table.rows.iter().map(|r| r.z_mean[dim]).collect();
    histogram(&values, bins)
}

fn check_dim(table: &EmbeddingTable, dim: usize) -> Result<()> {
    if dim >= table.latent_dim {
        return Err(Error::InvalidArgument(format!(
            "dimension {dim} out of range for latent size {}",
            table.latent_dim
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub sample_id: usize,
    pub label: u8,
    pub x: f64,
    pub y: f64,
}

/// Projects every row onto dimensions `(i, j)`, keeping labels.
pub fn scatter_dims(table: &EmbeddingTable, i: usize, j: usize) -> Result<Vec<ScatterPoint>> {
    check_dim(table, i)?;
    check_dim(table, j)?;
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "scatter needs two distinct dimensions, got {i} twice"
        )));
    }
    Ok(table
        .rows
        .iter()
        .map(|r| ScatterPoint {
            sample_id: r.sample_id,
            label: r.label,
            x: r.z_mean[i],
            y: r.z_mean[j],
        })
        .collect())
}

/// Columns `sample_id,label,z{i},z{j}`.
pub fn write_scatter_csv(
    path: impl AsRef<Path>,
    points: &[ScatterPoint],
    i: usize,
    j: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "sample_id".to_string(),
        "label".to_string(),
        format!("z{i}"),
        format!("z{j}"),
    ])?;
    for p in points {
        w.write_record([
            p.sample_id.to_string(),
            p.label.to_string(),
            format!("{:?}", p.x),
            format!("{:?}", p.y),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
