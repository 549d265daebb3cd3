//! Direct reference implementations for tests.
//!
//! Everything here works on plain `f64` slices with nested loops and shares
//! no code with the library under test. Tensors are row-major NHWC.

use std::collections::BTreeMap;

/// `a (m×k) · b (k×n)`.
pub fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// `x (n×din) · w (din×dout) + bias`.
pub fn dense(x: &[f64], n: usize, din: usize, w: &[f64], dout: usize, bias: &[f64]) -> Vec<f64> {
    let mut y = matmul(x, n, din, w, dout);
    for row in y.chunks_mut(dout) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

/// Output size and padding before the data for TensorFlow-style "same"
/// padding: the output has `ceil(size / stride)` positions and the total
/// padding is split with the extra pixel, if any, at the end.
pub fn same_geometry(size: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = (size + stride - 1) / stride;
    let needed = (out - 1) * stride + kernel;
    let total = if needed > size { needed - size } else { 0 };
    (out, total / 2)
}

/// Convolution with "same" padding. `x` is `[n, h, w, cin]`, `k` is
/// `[kh, kw, cin, cout]`. Returns the output and its shape.
pub fn conv2d_same(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, h, w, cin] = xs;
    let [kh, kw, kcin, cout] = ks;
    assert_eq!(cin, kcin);
    let (oh, pt) = same_geometry(h, kh, stride);
    let (ow, pl) = same_geometry(w, kw, stride);
    let mut y = vec![0.0; n * oh * ow * cout];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut s = bias[co];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let iy = (oy * stride + dy) as isize - pt as isize;
                            let ix = (ox * stride + dx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let (iy, ix) = (iy as usize, ix as usize);
                            for ci in 0..cin {
                                s += x[((b * h + iy) * w + ix) * cin + ci]
                                    * k[((dy * kw + dx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    y[((b * oh + oy) * ow + ox) * cout + co] = s;
                }
            }
        }
    }
    (y, [n, oh, ow, cout])
}

/// Transposed convolution written as a scatter: every input pixel adds
/// `x · K` into the output window it would have been computed from.
/// `x` is `[n, h, w, cin]`, `k` is `[kh, kw, cout, cin]`; the output is
/// `[n, h·stride, w·stride, cout]`.
pub fn conv_transpose2d_same(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, h, w, cin] = xs;
    let [kh, kw, cout, kcin] = ks;
    assert_eq!(cin, kcin);
    let (oh, ow) = (h * stride, w * stride);
    let (_, pt) = same_geometry(oh, kh, stride);
    let (_, pl) = same_geometry(ow, kw, stride);
    let mut y = vec![0.0; n * oh * ow * cout];
    for b in 0..n {
        for iy in 0..h {
            for ix in 0..w {
                for dy in 0..kh {
                    for dx in 0..kw {
                        let oy = (iy * stride + dy) as isize - pt as isize;
                        let ox = (ix * stride + dx) as isize - pl as isize;
                        if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                            continue;
                        }
                        let (oy, ox) = (oy as usize, ox as usize);
                        for co in 0..cout {
                            let mut s = 0.0;
                            for ci in 0..cin {
                                s += x[((b * h + iy) * w + ix) * cin + ci]
                                    * k[((dy * kw + dx) * cout + co) * cin + ci];
                            }
                            y[((b * oh + oy) * ow + ox) * cout + co] += s;
                        }
                    }
                }
            }
        }
    }
    for px in y.chunks_mut(cout) {
        for (v, b) in px.iter_mut().zip(bias) {
            *v += b;
        }
    }
    (y, [n, oh, ow, cout])
}

/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise difference, relative to the larger of the two
/// vectors' largest magnitudes. Zero when both are exactly zero.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Relative error of two scalars.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Mean of the rows carrying each label, one label at a time.
pub fn label_means(rows: &[Vec<f64>], labels: &[u8]) -> BTreeMap<u8, Vec<f64>> {
    assert_eq!(rows.len(), labels.len());
    let mut distinct: Vec<u8> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut out = BTreeMap::new();
    for label in distinct {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == label)
            .map(|(r, _)| r)
            .collect();
        let dim = members[0].len();
        let mean = (0..dim)
            .map(|d| members.iter().map(|r| r[d]).sum::<f64>() / members.len() as f64)
            .collect();
        out.insert(label, mean);
    }
    out
}

/// Label of the centroid with the smallest squared Euclidean distance;
/// ties go to the smaller label.
pub fn nearest_label(centroids: &BTreeMap<u8, Vec<f64>>, x: &[f64]) -> u8 {
    let mut best = (f64::INFINITY, 0u8);
    for (&label, c) in centroids {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, label);
        }
    }
    best.1
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}
