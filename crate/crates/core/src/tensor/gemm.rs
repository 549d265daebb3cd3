//! Row-major matrix multiply used by the dense and convolution kernels.
//!
//! Every output element is accumulated as `acc = Σ_k a[i][k]·b[k][j]` in
//! ascending `k` from zero and then added to `c[i][j]`, whatever tile or
//! thread computes it. Results are therefore bit-identical across thread
//! counts and batch sizes.

use std::ops::Range;

use rayon::prelude::*;

use super::Real;

const MR: usize = 6;

/// Depth block; keeps a `KC×n` panel of the right operand cache-resident.
const KC: usize = 256;

/// Minimum multiply-accumulate count before rows are split across threads.
const PAR_THRESHOLD: usize = 1 << 20;

/// `c (m×n) += a (m×k) · b (k×n)`.
pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_strided(
        m,
        k,
        n,
        Lhs {
            data: a,
            row: k,
            depth: 1,
        },
        b,
        c,
    );
}

/// `c (m×n) += aᵀ · b` where `a` is stored `k×m`.
pub(crate) fn gemm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_strided(
        m,
        k,
        n,
        Lhs {
            data: a,
            row: 1,
            depth: m,
        },
        b,
        c,
    );
}

/// Left operand with element `(i, kk)` at `data[i·row + kk·depth]`.
#[derive(Clone, Copy)]
struct Lhs<'a, T> {
    data: &'a [T],
    row: usize,
    depth: usize,
}

impl<T: Real> Lhs<'_, T> {
    #[inline(always)]
    fn at(&self, i: usize, kk: usize) -> T {
        self.data[i * self.row + kk * self.depth]
    }
}

fn gemm_strided<T: Real>(m: usize, k: usize, n: usize, a: Lhs<'_, T>, b: &[T], c: &mut [T]) {
    assert_eq!(a.data.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    let threads = rayon::current_num_threads();
    if threads <= 1 || m * k * n < PAR_THRESHOLD || m < 2 * MR {
        kernel(0, m, k, n, a, b, c);
        return;
    }
    let tasks = threads * 4;
    let rows_per_task = m.div_ceil(tasks).next_multiple_of(MR);
    c.par_chunks_mut(rows_per_task * n)
        .enumerate()
        .for_each(|(t, chunk)| {
            let row0 = t * rows_per_task;
            kernel(row0, chunk.len() / n, k, n, a, b, chunk);
        });
}

/// Rows `row0..row0+rows` of the product into `c`, which holds just those rows.
fn kernel<T: Real>(
    row0: usize,
    rows: usize,
    k: usize,
    n: usize,
    a: Lhs<'_, T>,
    b: &[T],
    c: &mut [T],
) {
    if k <= KC {
        blocks(row0, rows, k, n, a, b, c, 0..k);
        return;
    }
    // Partial sums live in `acc` between depth blocks; reloading a partial
    // sum does not change its value, so the summation order is unchanged.
    let mut acc = vec![T::zero(); rows * n];
    for k0 in (0..k).step_by(KC) {
        blocks(row0, rows, k, n, a, b, &mut acc, k0..(k0 + KC).min(k));
    }
    for (cv, &av) in c.iter_mut().zip(&acc) {
        *cv += av;
    }
}

/// Accumulates the depth range `ks` of every row into `out`. When `ks`
/// covers the whole depth, `out` is the destination itself.
#[allow(clippy::too_many_arguments)]
fn blocks<T: Real>(
    row0: usize,
    rows: usize,
    k: usize,
    n: usize,
    a: Lhs<'_, T>,
    b: &[T],
    out: &mut [T],
    ks: Range<usize>,
) {
    let whole = ks.start == 0 && ks.end == k;
    let mut i = 0;
    while i + MR <= rows {
        row_block::<T, MR>(row0, i, n, a, b, out, ks.clone(), whole);
        i += MR;
    }
    while i < rows {
        row_block::<T, 1>(row0, i, n, a, b, out, ks.clone(), whole);
        i += 1;
    }
}

/// Rows `i..i+R`, all columns, in tiles of decreasing width. The rows'
/// slice of `a` is first packed so each depth step reads `R` adjacent values.
#[allow(clippy::too_many_arguments)]
fn row_block<T: Real, const R: usize>(
    row0: usize,
    i: usize,
    n: usize,
    a: Lhs<'_, T>,
    b: &[T],
    out: &mut [T],
    ks: Range<usize>,
    whole: bool,
) {
    let pack: Vec<[T; R]> = ks
        .clone()
        .map(|kk| std::array::from_fn(|r| a.at(row0 + i + r, kk)))
        .collect();
    let b = &b[ks.start * n..ks.end * n];
    let mut j = 0;
    while j + 32 <= n {
        tile::<T, R, 32>(&pack, i, j, n, b, out, whole);
        j += 32;
    }
    if j + 16 <= n {
        tile::<T, R, 16>(&pack, i, j, n, b, out, whole);
        j += 16;
    }
    if j + 8 <= n {
        tile::<T, R, 8>(&pack, i, j, n, b, out, whole);
        j += 8;
    }
    if j + 4 <= n {
        tile::<T, R, 4>(&pack, i, j, n, b, out, whole);
        j += 4;
    }
    while j < n {
        tile::<T, R, 1>(&pack, i, j, n, b, out, whole);
        j += 1;
    }
}

#[inline(always)]
fn tile<T: Real, const R: usize, const W: usize>(
    pack: &[[T; R]],
    i: usize,
    j: usize,
    n: usize,
    b: &[T],
    out: &mut [T],
    whole: bool,
) {
    let mut acc = [[T::zero(); W]; R];
    if !whole {
        for (r, acc_row) in acc.iter_mut().enumerate() {
            acc_row.copy_from_slice(&out[(i + r) * n + j..(i + r) * n + j + W]);
        }
    }
    for (av, brow) in pack.iter().zip(b.chunks_exact(n)) {
        let brow: &[T; W] = brow[j..j + W].try_into().unwrap();
        for (acc_row, &a) in acc.iter_mut().zip(av) {
            for q in 0..W {
                acc_row[q] += a * brow[q];
            }
        }
    }
    for (r, acc_row) in acc.iter().enumerate() {
        let orow = &mut out[(i + r) * n + j..(i + r) * n + j + W];
        if whole {
            for q in 0..W {
                orow[q] += acc_row[q];
            }
        } else {
            orow.copy_from_slice(acc_row);
        }
    }
}

/// Transposes a row-major `rows×cols` matrix.
pub(crate) fn transpose<T: Real>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    assert_eq!(src.len(), rows * cols);
    let mut out = vec![T::zero(); src.len()];
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    out[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    c[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_on_ragged_shapes() {
        for &(m, k, n) in &[(1, 1, 1), (5, 3, 17), (9, 7, 33), (4, 16, 16), (13, 2, 5)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 5 % 13) as f64) * 0.5).collect();
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &a, &b, &mut c);
            assert_eq!(c, naive(m, k, n, &a, &b), "{m}x{k}x{n}");
        }
    }

    #[test]
    fn deep_products_keep_ascending_order() {
        let (m, k, n) = (7, 3 * KC + 5, 37);
        let a: Vec<f32> = (0..m * k)
            .map(|i| ((i * 37 % 101) as f32 - 50.0) / 7.0)
            .collect();
        let b: Vec<f32> = (0..k * n)
            .map(|i| ((i * 53 % 97) as f32 - 48.0) / 9.0)
            .collect();
        let mut c: Vec<f32> = (0..m * n).map(|i| i as f32 * 0.25).collect();
        let mut expected = c.clone();
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f32;
                for kk in 0..k {
                    acc += a[i * k + kk] * b[kk * n + j];
                }
                expected[i * n + j] += acc;
            }
        }
        gemm(m, k, n, &a, &b, &mut c);
        assert!(c
            .iter()
            .zip(&expected)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn transposed_lhs_matches_explicit_transpose() {
        for &(m, k, n) in &[(1, 1, 1), (13, 5, 9), (6, 2 * KC + 3, 40), (7, 600, 3)] {
            let a: Vec<f32> = (0..k * m)
                .map(|i| ((i * 31 % 17) as f32 - 8.0) / 3.0)
                .collect();
            let b: Vec<f32> = (0..k * n)
                .map(|i| ((i * 11 % 23) as f32 - 11.0) / 5.0)
                .collect();
            let mut c1 = vec![0.5f32; m * n];
            let mut c2 = c1.clone();
            gemm_tn(m, k, n, &a, &b, &mut c1);
            gemm(m, k, n, &transpose(k, m, &a), &b, &mut c2);
            assert_eq!(c1, c2, "{m}x{k}x{n}");
        }
    }

    #[test]
    fn transpose_round_trips() {
        let src: Vec<f32> = (0..35 * 70).map(|i| i as f32).collect();
        let t = transpose(35, 70, &src);
        assert_eq!(t[1], src[70]);
        assert_eq!(transpose(70, 35, &t), src);
    }
}
