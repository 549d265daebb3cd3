//! Quick-look rasters for histogram and scatter exports.

use bridge_vae::latent::{Histogram, ScatterPoint};
use bridge_vae::Image;

const WIDTH: usize = 512;
const HEIGHT: usize = 256;
const MARGIN: usize = 8;

/// Bars in white, the normal reference as gray dots.
pub fn histogram_image(h: &Histogram) -> Image {
    let mut img = Image::black(WIDTH, HEIGHT);
    let bins = h.counts.len();
    let top = h
        .counts
        .iter()
        .map(|&c| c as f64)
        .chain(h.reference.iter().copied())
        .fold(1.0, f64::max);
    let plot_w = WIDTH - 2 * MARGIN;
    let plot_h = (HEIGHT - 2 * MARGIN) as f64;
    let base = HEIGHT - MARGIN;
    for (b, &count) in h.counts.iter().enumerate() {
        let x0 = MARGIN + b * plot_w / bins;
        let x1 = (MARGIN + (b + 1) * plot_w / bins).max(x0 + 1);
        let bar = (count as f64 / top * plot_h).round() as usize;
        for x in x0..x1.saturating_sub(1).max(x0 + 1) {
            for y in base - bar..base {
                img.set(x, y, 1.0);
            }
        }
        let r = (h.reference[b] / top * plot_h).round() as usize;
        let y = base - r.min(base);
        img.set((x0 + x1) / 2, y.min(HEIGHT - 1), 0.5);
    }
    img
}

/// One dot per point, brightness by label.
pub fn scatter_image(points: &[ScatterPoint]) -> Image {
    let mut img = Image::black(WIDTH, HEIGHT);
    if points.is_empty() {
        return img;
    }
    let span = |f: fn(&ScatterPoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x_lo, x_span) = span(|p| p.x);
    let (y_lo, y_span) = span(|p| p.y);
    let plot_w = (WIDTH - 2 * MARGIN - 1) as f64;
    let plot_h = (HEIGHT - 2 * MARGIN - 1) as f64;
    for p in points {
        let x = MARGIN + ((p.x - x_lo) / x_span * plot_w).round() as usize;
        let y = HEIGHT - 1 - MARGIN - ((p.y - y_lo) / y_span * plot_h).round() as usize;
        img.set(x, y, 0.3 + 0.1 * p.label as f32);
    }
    img
}
