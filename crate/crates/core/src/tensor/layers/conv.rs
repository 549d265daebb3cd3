//! Strided 2-D convolution with "same" padding and its transpose.
//!
//! Both are lowered to a patch matrix (`im2col`) and a matrix multiply.
//! Kernels are `kh×kw×Cin×Cout` for [`Conv2d`]; [`ConvTranspose2d`] stores
//! `kh×kw×Cout×Cin`, so a transpose layer is exactly the input-adjoint of
//! the convolution holding the same array.

use super::{glorot_uniform, not_run, sigmoid, Ctx, Layer, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm, gemm_tn, transpose, Real, Tensor};

/// Output size and leading pad for "same" padding: `out = ⌈size/stride⌉`,
/// with any odd padding placed after the data.
pub fn same_padding(size: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(size);
    (out, total / 2)
}

/// Geometry of a convolution from an `n×h×w×cin` input to `n×oh×ow×cout`.
#[derive(Clone, Copy, Debug)]
struct Geom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geom {
    fn same(n: usize, h: usize, w: usize, cin: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let (oh, pad_top) = same_padding(h, kh, stride);
        let (ow, pad_left) = same_padding(w, kw, stride);
        Geom {
            n,
            h,
            w,
            cin,
            kh,
            kw,
            stride,
            oh,
            ow,
            pad_top,
            pad_left,
        }
    }

    fn patch_rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    fn patch_cols(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    /// Input row/column for an output position and kernel tap, if inside.
    fn source(&self, o: usize, k: usize, pad: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(pad)
            .filter(|&i| i < limit)
    }
}

fn im2col<T: Real>(x: &[T], g: &Geom) -> Vec<T> {
    let cols = g.patch_cols();
    let mut out = vec![T::zero(); g.patch_rows() * cols];
    let mut row = 0;
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let dst = &mut out[row * cols..(row + 1) * cols];
                for ky in 0..g.kh {
                    let Some(iy) = g.source(oy, ky, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.source(ox, kx, g.pad_left, g.w) else {
                            continue;
                        };
                        let src = ((b * g.h + iy) * g.w + ix) * g.cin;
                        let off = (ky * g.kw + kx) * g.cin;
                        dst[off..off + g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
                row += 1;
            }
        }
    }
    out
}

fn col2im<T: Real>(cols: &[T], g: &Geom) -> Vec<T> {
    let width = g.patch_cols();
    let mut out = vec![T::zero(); g.n * g.h * g.w * g.cin];
    let mut row = 0;
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let src = &cols[row * width..(row + 1) * width];
                for ky in 0..g.kh {
                    let Some(iy) = g.source(oy, ky, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.source(ox, kx, g.pad_left, g.w) else {
                            continue;
                        };
                        let dst = ((b * g.h + iy) * g.w + ix) * g.cin;
                        let off = (ky * g.kw + kx) * g.cin;
                        for (d, &s) in out[dst..dst + g.cin].iter_mut().zip(&src[off..off + g.cin])
                        {
                            *d += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    out
}

fn kernel_dims(
    kernel: &Tensor<impl Real>,
    op: &'static str,
) -> Result<(usize, usize, usize, usize)> {
    kernel.dims4(op)
}

fn check_bias<T: Real>(bias: Option<&Tensor<T>>, channels: usize, op: &'static str) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != channels {
            return Err(Error::ShapeMismatch {
                op,
                dim: "bias length",
                expected: channels,
                found: b.len(),
            });
        }
    }
    Ok(())
}

fn check_stride(stride: usize, op: &'static str) -> Result<()> {
    if stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "{op}: stride must be at least 1"
        )));
    }
    Ok(())
}

fn rows_with_bias<T: Real>(rows: usize, bias: Option<&Tensor<T>>, channels: usize) -> Vec<T> {
    match bias {
        Some(b) => {
            let mut out = Vec::with_capacity(rows * channels);
            for _ in 0..rows {
                out.extend_from_slice(b.data());
            }
            out
        }
        None => vec![T::zero(); rows * channels],
    }
}

fn channel_sums<T: Real>(dy: &[T], channels: usize, into: &mut [T]) {
    for row in dy.chunks_exact(channels) {
        for (acc, &g) in into.iter_mut().zip(row) {
            *acc += g;
        }
    }
}

/// Forward convolution, "same" padding. `kernel` is `kh×kw×Cin×Cout`.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    conv2d_with_patches(x, kernel, bias, stride).map(|(y, _, _)| y)
}

fn conv2d_with_patches<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<(Tensor<T>, Vec<T>, Geom)> {
    const OP: &str = "conv2d";
    check_stride(stride, OP)?;
    let (n, h, w, cin) = x.dims4(OP)?;
    let (kh, kw, kcin, cout) = kernel_dims(kernel, OP)?;
    if kcin != cin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input channels",
            expected: kcin,
            found: cin,
        });
    }
    check_bias(bias, cout, OP)?;
    let g = Geom::same(n, h, w, cin, kh, kw, stride);
    let cols = im2col(x.data(), &g);
    let rows = g.patch_rows();
    let mut out = rows_with_bias(rows, bias, cout);
    gemm(rows, g.patch_cols(), cout, &cols, kernel.data(), &mut out);
    let y = Tensor::new(vec![n, g.oh, g.ow, cout], out)?;
    Ok((y, cols, g))
}

/// Transposed convolution: spatial dims multiply by `stride`.
/// `kernel` is `kh×kw×Cout×Cin`.
pub fn conv_transpose2d<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    const OP: &str = "conv_transpose2d";
    check_stride(stride, OP)?;
    let (n, h, w, cin) = x.dims4(OP)?;
    let (kh, kw, cout, kcin) = kernel_dims(kernel, OP)?;
    if kcin != cin {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input channels",
            expected: kcin,
            found: cin,
        });
    }
    check_bias(bias, cout, OP)?;
    let g = Geom::same(n, h * stride, w * stride, cout, kh, kw, stride);
    debug_assert_eq!((g.oh, g.ow), (h, w));
    let kc = g.patch_cols();
    // cols = x · Kᵀ, with K viewed as a (kh·kw·Cout)×Cin matrix.
    let kt = transpose(kc, cin, kernel.data());
    let mut cols = vec![T::zero(); n * h * w * kc];
    gemm(n * h * w, cin, kc, x.data(), &kt, &mut cols);
    let mut out = col2im(&cols, &g);
    if let Some(b) = bias {
        for px in out.chunks_exact_mut(cout) {
            for (v, &bv) in px.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
    Tensor::new(vec![n, g.h, g.w, cout], out)
}

pub struct Conv2d<T: Real = f32> {
    name: String,
    stride: usize,
    kernel: Param<T>,
    bias: Param<T>,
    cache: Option<(Vec<T>, Geom)>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        ksize: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let name = name.into();
        let shape = [ksize, ksize, cin, cout];
        Conv2d {
            kernel: Param::new(format!("{name}/kernel"), glorot_uniform(&shape, rng), true),
            bias: Param::new(format!("{name}/bias"), Tensor::zeros(vec![cout]), true),
            name,
            stride,
            cache: None,
        }
    }

    pub fn kernel(&self) -> &Param<T> {
        &self.kernel
    }

    pub fn bias(&self) -> &Param<T> {
        &self.bias
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Conv2D"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let &[h, w, _] = input else {
            return Err(Error::Rank {
                op: "conv2d",
                expected: 3,
                found: input.len(),
            });
        };
        let s = self.kernel.value.shape();
        Ok(vec![
            same_padding(h, s[0], self.stride).0,
            same_padding(w, s[1], self.stride).0,
            s[3],
        ])
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let (y, cols, g) =
            conv2d_with_patches(x, &self.kernel.value, Some(&self.bias.value), self.stride)?;
        self.cache = Some((cols, g));
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.kernel.value, Some(&self.bias.value), self.stride)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (cols, g) = self.cache.as_ref().ok_or_else(|| not_run(&self.name))?;
        let cout = self.bias.count();
        let rows = g.patch_rows();
        let kc = g.patch_cols();
        if dy.len() != rows * cout {
            return Err(Error::ShapeMismatch {
                op: "conv2d backward",
                dim: "upstream gradient length",
                expected: rows * cout,
                found: dy.len(),
            });
        }
        gemm_tn(kc, rows, cout, cols, dy.data(), self.kernel.grad.data_mut());
        channel_sums(dy.data(), cout, self.bias.grad.data_mut());

        let kt = transpose(kc, cout, self.kernel.value.data());
        let mut dcols = vec![T::zero(); rows * kc];
        gemm(rows, cout, kc, dy.data(), &kt, &mut dcols);
        Tensor::new(vec![g.n, g.h, g.w, g.cin], col2im(&dcols, g))
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

pub struct ConvTranspose2d<T: Real = f32> {
    name: String,
    stride: usize,
    kernel: Param<T>,
    bias: Param<T>,
    fused_sigmoid: bool,
    /// Input, and the output when the sigmoid is fused.
    cache: Option<(Tensor<T>, Option<Tensor<T>>)>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(
        name: impl Into<String>,
        cin: usize,
        cout: usize,
        ksize: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let name = name.into();
        let shape = [ksize, ksize, cout, cin];
        ConvTranspose2d {
            kernel: Param::new(format!("{name}/kernel"), glorot_uniform(&shape, rng), true),
            bias: Param::new(format!("{name}/bias"), Tensor::zeros(vec![cout]), true),
            name,
            stride,
            fused_sigmoid: false,
            cache: None,
        }
    }

    /// Applies a logistic output activation as part of this layer, the way
    /// a Keras layer with `activation="sigmoid"` reports a single row.
    pub fn with_sigmoid(mut self) -> Self {
        self.fused_sigmoid = true;
        self
    }
}

impl<T: Real> Layer<T> for ConvTranspose2d<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> &'static str {
        "Conv2DTranspose"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let &[h, w, _] = input else {
            return Err(Error::Rank {
                op: "conv_transpose2d",
                expected: 3,
                found: input.len(),
            });
        };
        Ok(vec![
            h * self.stride,
            w * self.stride,
            self.kernel.value.shape()[2],
        ])
    }

    fn forward(&mut self, x: &Tensor<T>, _ctx: &mut Ctx<'_>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        let out = self.fused_sigmoid.then(|| y.clone());
        self.cache = Some((x.clone(), out));
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = conv_transpose2d(x, &self.kernel.value, Some(&self.bias.value), self.stride)?;
        Ok(if self.fused_sigmoid { sigmoid(&y) } else { y })
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (x, out) = self.cache.as_ref().ok_or_else(|| not_run(&self.name))?;
        let mut dy = dy.clone();
        if let Some(y) = out {
            dy.expect_same_shape(y, "conv_transpose2d backward")?;
            for (g, &p) in dy.data_mut().iter_mut().zip(y.data()) {
                *g *= p * (T::one() - p);
            }
        }
        let (n, h, w, cin) = x.dims4("conv_transpose2d backward")?;
        let ks = self.kernel.value.shape();
        let (kh, kw, cout) = (ks[0], ks[1], ks[2]);
        let g = Geom::same(
            n,
            h * self.stride,
            w * self.stride,
            cout,
            kh,
            kw,
            self.stride,
        );
        let expected = n * g.h * g.w * cout;
        if dy.len() != expected {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose2d backward",
                dim: "upstream gradient length",
                expected,
                found: dy.len(),
            });
        }
        let rows = n * h * w;
        let kc = g.patch_cols();
        let dcols = im2col(dy.data(), &g);

        gemm_tn(kc, rows, cin, &dcols, x.data(), self.kernel.grad.data_mut());
        channel_sums(dy.data(), cout, self.bias.grad.data_mut());

        let mut dx = vec![T::zero(); rows * cin];
        gemm(rows, kc, cin, &dcols, self.kernel.value.data(), &mut dx);
        Tensor::new(vec![n, h, w, cin], dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}
