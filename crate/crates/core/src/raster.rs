//! Single-channel images with values in `[0, 1]` and their 8-bit PNG form.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Row-major grayscale image; 0 is black, 1 is white.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DataLength {
                shape: vec![height, width],
                found: pixels.len(),
            });
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn black(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixels brighter than one half.
    pub fn white_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn intensity_sum(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum()
    }

    /// Values as they would read back from an 8-bit PNG.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|&v| to_u8(v) as f32 / 255.0)
                .collect(),
        }
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self.pixels.iter().map(|&v| to_u8(v)).collect();
        let buf =
            image::ImageBuffer::<Luma<u8>, _>::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_luma8();
        let (w, h) = img.dimensions();
        Image::new(
            w as usize,
            h as usize,
            img.into_raw()
                .into_iter()
                .map(|v| v as f32 / 255.0)
                .collect(),
        )
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_png_bytes(&bytes)
    }

    /// Batch of one, `1×H×W×1`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            vec![1, self.height, self.width, 1],
            self.pixels.iter().map(|&v| T::of(v as f64)).collect(),
        )
        .expect("pixel count matches shape")
    }

    /// Splits an `N×H×W×1` tensor into images.
    pub fn from_batch<T: Real>(batch: &Tensor<T>) -> Result<Vec<Image>> {
        let (n, h, w, c) = batch.dims4("image batch")?;
        if c != 1 {
            return Err(Error::ShapeMismatch {
                op: "image batch",
                dim: "channels",
                expected: 1,
                found: c,
            });
        }
        Ok(batch
            .data()
            .chunks_exact(h * w)
            .take(n)
            .map(|px| Image {
                width: w,
                height: h,
                pixels: px.iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect())
    }

    /// Stacks same-sized images into `N×H×W×1`.
    pub fn stack<T: Real>(images: &[Image]) -> Result<Tensor<T>> {
        let Some(first) = images.first() else {
            return Err(Error::InvalidArgument("cannot stack zero images".into()));
        };
        let (w, h) = (first.width, first.height);
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            if (img.width, img.height) != (w, h) {
                return Err(Error::ShapeMismatch {
                    op: "image stack",
                    dim: "image size",
                    expected: w * h,
                    found: img.width * img.height,
                });
            }
            data.extend(img.pixels.iter().map(|&v| T::of(v as f64)));
        }
        Tensor::new(vec![images.len(), h, w, 1], data)
    }

    /// Squared Euclidean distance between same-sized images.
    pub fn distance_sq(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum()
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_within_quantization() {
        let img = Image::new(7, 3, (0..21).map(|i| i as f32 / 20.0).collect()).unwrap();
        let back = Image::from_png_bytes(&img.to_png_bytes().unwrap()).unwrap();
        assert_eq!((back.width(), back.height()), (7, 3));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        assert_eq!(back, img.quantized());
    }

    #[test]
    fn png_bytes_are_deterministic() {
        let img = Image::new(4, 4, (0..16).map(|i| (i as f32 * 0.37).fract()).collect()).unwrap();
        assert_eq!(img.to_png_bytes().unwrap(), img.to_png_bytes().unwrap());
    }

    #[test]
    fn stack_rejects_mixed_sizes() {
        let err = Image::stack::<f32>(&[Image::black(2, 2), Image::black(3, 2)]);
        assert!(err.is_err());
    }
}
