use serde::{Deserialize, Serialize};

use crate::raster::Image;

pub const ROTATIONS_DEG: [f64; 3] = [-0.3, 0.0, 0.3];
pub const HSCALE_RANGE: (f64, f64) = (1.0, 1.05);
pub const VSCALE_RANGE: (f64, f64) = (1.0, 1.1);
pub const SCALE_STEPS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub hscale: f64,
    pub vscale: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        rotation_deg: 0.0,
        hscale: 1.0,
        vscale: 1.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// All 3 × 5 × 5 combinations: rotation outermost, vertical scale innermost.
    pub fn grid() -> Vec<AugmentParams> {
        let steps = |(lo, hi): (f64, f64)| -> Vec<f64> {
            (0..SCALE_STEPS)
                .map(|i| lo + (hi - lo) * i as f64 / (SCALE_STEPS - 1) as f64)
                .collect()
        };
        let mut out = Vec::with_capacity(75);
        for &rotation_deg in &ROTATIONS_DEG {
            for &hscale in &steps(HSCALE_RANGE) {
                for &vscale in &steps(VSCALE_RANGE) {
                    out.push(AugmentParams {
                        rotation_deg,
                        hscale,
                        vscale,
                    });
                }
            }
        }
        out
    }
}

/// Rotates about the image center, then scales horizontally and vertically
/// about the center. Bilinear sampling; anything mapped from outside the
/// canvas is black. Output has the input's size. Positive angles turn the
/// picture counter-clockwise as displayed.
pub fn augment(image: &Image, p: &AugmentParams) -> Image {
    if p.is_identity() {
        return image.clone();
    }
    let (w, h) = (image.width(), image.height());
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
    let mut out = Image::black(w, h);
    for v in 0..h {
        for u in 0..w {
            // Undo the scale, then the rotation, on pixel-center coordinates.
            let qx = (u as f64 + 0.5 - cx) / p.hscale;
            let qy = (v as f64 + 0.5 - cy) / p.vscale;
            let sx = cx + qx * cos - qy * sin;
            let sy = cy + qx * sin + qy * cos;
            out.set(u, v, bilinear(image, sx - 0.5, sy - 0.5));
        }
    }
    out
}

fn bilinear(img: &Image, x: f64, y: f64) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= img.width() as i64 || yi >= img.height() as i64 {
            0.0
        } else {
            img.get(xi as usize, yi as usize) as f64
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}
