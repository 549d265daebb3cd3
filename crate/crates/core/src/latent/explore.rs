use crate::dataset::Subtype;
use crate::error::{Error, Result};
use crate::model::Vae;
use crate::raster::Image;
use crate::tensor::Tensor;

pub const DEFAULT_MORPH_STEPS: usize = 11;

/// Probe magnitudes for the four boundary-sampling passes.
pub const BOUNDARY_MAGNITUDES: [f64; 4] = [100.0, 5.0, 4.0, 3.0];

const DECODE_BATCH: usize = 32;

/// Decodes latent points in order. Decoding is per-sample, so the result
/// does not depend on how points are grouped into batches.
pub fn decode_points(vae: &Vae<f32>, points: &[Vec<f64>]) -> Result<Vec<Image>> {
    let d = vae.latent_dim();
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(DECODE_BATCH) {
        let mut data = Vec::with_capacity(chunk.len() * d);
        for p in chunk {
            if p.len() != d {
                return Err(Error::ShapeMismatch {
                    op: "decode",
                    dim: "latent dimension",
                    expected: d,
                    found: p.len(),
                });
            }
            data.extend(p.iter().map(|&v| v as f32));
        }
        let z = Tensor::new(vec![chunk.len(), d], data)?;
        out.extend(Image::from_batch(&vae.decode(&z)?)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorphTrack {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub frames: Vec<Image>,
}

/// Points `(1−t)·a + t·b` for `t = k/(steps−1)`, decoded. The first and
/// last points are `a` and `b` exactly.
pub fn morph(vae: &Vae<f32>, a: &[f64], b: &[f64], steps: usize) -> Result<MorphTrack> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!(
            "morph needs at least 2 steps, got {steps}"
        )));
    }
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "morph",
            dim: "endpoint length",
            expected: a.len(),
            found: b.len(),
        });
    }
    let last = steps - 1;
    let points: Vec<Vec<f64>> = (0..steps)
        .map(|k| match k {
            0 => a.to_vec(),
            k if k == last => b.to_vec(),
            k => {
                let t = k as f64 / last as f64;
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| (1.0 - t) * x + t * y)
                    .collect()
            }
        })
        .collect();
    let frames = decode_points(vae, &points)?;
    Ok(MorphTrack {
        a: a.to_vec(),
        b: b.to_vec(),
        points,
        frames,
    })
}

/// All `2^dim` corners of the cube `[−m, m]^dim` in lexicographic order,
/// `−` before `+`, first coordinate most significant.
pub fn boundary_grid(magnitude: f64, dim: usize) -> Result<Vec<Vec<f64>>> {
    if !(magnitude.is_finite() && magnitude > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "boundary magnitude must be positive and finite, got {magnitude}"
        )));
    }
    if dim == 0 || dim > 24 {
        return Err(Error::InvalidArgument(format!(
            "boundary grid dimension {dim} outside 1..=24"
        )));
    }
    Ok((0..1usize << dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i >> (dim - 1 - j) & 1 == 1 {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect()
        })
        .collect())
}

/// Every unordered pair of distinct subtypes, in label order.
pub fn subtype_pairs() -> Vec<(Subtype, Subtype)> {
    let all = Subtype::ALL;
    let mut out = Vec::new();
    for (i, &a) in all.iter().enumerate() {
        for &b in &all[i + 1..] {
            out.push((a, b));
        }
    }
    out
}
