//! Stateless layer kernels with hand-written backward passes. Activations are
//! laid out (channels, freq, time) for the convolutional stack and
//! (time, features) for the sequence stack.

use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

/// Patch matrix of a 3x3, stride-1, zero-padded convolution:
/// rows `c*9 + di*3 + dj`, columns `f*T + t`.
pub(crate) fn im2col3x3<T: Scalar>(x: ArrayView3<'_, T>) -> Array2<T> {
    let (c, f, t) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut cols = Array2::<T>::zeros((c * 9, f * t));
    {
        let out = cols.as_slice_mut().expect("fresh array");
        for ci in 0..c {
            for di in 0..3 {
                for dj in 0..3 {
                    let row = ci * 9 + di * 3 + dj;
                    let dst_row = &mut out[row * f * t..(row + 1) * f * t];
                    // output column range whose source index t+dj-1 is in bounds
                    let t_lo = if dj == 0 { 1 } else { 0 };
                    let t_hi = if dj == 2 { t.saturating_sub(1) } else { t };
                    for fi in 0..f {
                        let src_f = fi as isize + di as isize - 1;
                        if src_f < 0 || src_f >= f as isize {
                            continue;
                        }
                        let src = &xs[(ci * f + src_f as usize) * t..];
                        let dst = &mut dst_row[fi * t..(fi + 1) * t];
                        for ti in t_lo..t_hi {
                            dst[ti] = src[ti + dj - 1];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3x3`].
pub(crate) fn col2im3x3<T: Scalar>(cols: ArrayView2<'_, T>, c: usize, f: usize, t: usize) -> Array3<T> {
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let mut x = Array3::<T>::zeros((c, f, t));
    {
        let xs = x.as_slice_mut().expect("fresh array");
        for ci in 0..c {
            for di in 0..3 {
                for dj in 0..3 {
                    let row = ci * 9 + di * 3 + dj;
                    let src_row = &cs[row * f * t..(row + 1) * f * t];
                    let t_lo = if dj == 0 { 1 } else { 0 };
                    let t_hi = if dj == 2 { t.saturating_sub(1) } else { t };
                    for fi in 0..f {
                        let dst_f = fi as isize + di as isize - 1;
                        if dst_f < 0 || dst_f >= f as isize {
                            continue;
                        }
                        let base = (ci * f + dst_f as usize) * t;
                        let src = &src_row[fi * t..(fi + 1) * t];
                        for ti in t_lo..t_hi {
                            xs[base + ti + dj - 1] += src[ti];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `w` (out, in*9) applied to the patch matrix, plus bias: (out, f, t).
pub(crate) fn conv_apply<T: Scalar>(w: ArrayView2<'_, T>, b: ArrayView1<'_, T>, cols: &Array2<T>, f: usize, t: usize) -> Array3<T> {
    let mut z = w.dot(cols);
    for (mut row, &bias) in z.axis_iter_mut(Axis(0)).zip(b.iter()) {
        row.mapv_inplace(|v| v + bias);
    }
    let c = z.nrows();
    z.into_shape_with_order((c, f, t)).expect("contiguous")
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

pub(crate) fn silu<T: Scalar>(z: T) -> T {
    z * sigmoid(z)
}

pub(crate) fn silu_grad<T: Scalar>(z: T) -> T {
    let s = sigmoid(z);
    s * (T::one() + z * (T::one() - s))
}

/// Non-overlapping average pooling; trailing bins that do not fill a window
/// are dropped.
pub(crate) fn avg_pool<T: Scalar>(x: ArrayView3<'_, T>, pf: usize, pt: usize) -> Array3<T> {
    let (c, f, t) = x.dim();
    let (fo, to) = (f / pf, t / pt);
    let inv = T::one() / T::of((pf * pt) as f64);
    let mut out = Array3::<T>::zeros((c, fo, to));
    for ci in 0..c {
        for fi in 0..fo * pf {
            for ti in 0..to * pt {
                out[[ci, fi / pf, ti / pt]] += x[[ci, fi, ti]];
            }
        }
    }
    out.mapv_inplace(|v| v * inv);
    out
}

pub(crate) fn avg_pool_backward<T: Scalar>(g: ArrayView3<'_, T>, pf: usize, pt: usize, in_shape: (usize, usize, usize)) -> Array3<T> {
    let (c, fo, to) = g.dim();
    let inv = T::one() / T::of((pf * pt) as f64);
    let mut out = Array3::<T>::zeros(in_shape);
    for ci in 0..c {
        for fi in 0..fo * pf {
            for ti in 0..to * pt {
                out[[ci, fi, ti]] = g[[ci, fi / pf, ti / pt]] * inv;
            }
        }
    }
    out
}

/// `x w^T + b` for row-major activations `x` (rows, in).
pub(crate) fn linear<T: Scalar>(x: ArrayView2<'_, T>, w: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array2<T> {
    let mut y = x.dot(&w.t());
    y += &b;
    y
}

/// Gradients of [`linear`]: (dx, dw, db).
pub(crate) fn linear_backward<T: Scalar>(
    x: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    dy: ArrayView2<'_, T>,
    need_dx: bool,
) -> (Option<Array2<T>>, Array2<T>, Array1<T>) {
    let dw = dy.t().dot(&x);
    let db = dy.sum_axis(Axis(0));
    let dx = need_dx.then(|| dy.dot(&w));
    (dx, dw, db)
}

pub(crate) fn softmax_rows<T: Scalar>(s: &mut Array2<T>) {
    for mut row in s.rows_mut() {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

pub(crate) const LN_EPS: f64 = 1e-5;

/// Row-wise layer normalisation; returns (y, xhat, 1/std).
pub(crate) fn layer_norm<T: Scalar>(r: ArrayView2<'_, T>, gamma: ArrayView1<'_, T>, beta: ArrayView1<'_, T>) -> (Array2<T>, Array2<T>, Array1<T>) {
    let (rows, h) = r.dim();
    let hn = T::of(h as f64);
    let mut xhat = Array2::<T>::zeros((rows, h));
    let mut rstd = Array1::<T>::zeros(rows);
    for i in 0..rows {
        let row = r.row(i);
        let mean = row.sum() / hn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / hn;
        let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
        rstd[i] = rs;
        for j in 0..h {
            xhat[[i, j]] = (row[j] - mean) * rs;
        }
    }
    let y = &xhat * &gamma + &beta;
    (y, xhat, rstd)
}

/// Gradients of [`layer_norm`]: (dr, dgamma, dbeta).
pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: ArrayView2<'_, T>,
    xhat: ArrayView2<'_, T>,
    rstd: ArrayView1<'_, T>,
    gamma: ArrayView1<'_, T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let (rows, h) = dy.dim();
    let hn = T::of(h as f64);
    let dgamma = (&dy * &xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let dxhat = &dy * &gamma;
    let mut dr = Array2::<T>::zeros((rows, h));
    for i in 0..rows {
        let g = dxhat.row(i);
        let xh = xhat.row(i);
        let m1 = g.sum() / hn;
        let m2 = g.dot(&xh) / hn;
        for j in 0..h {
            dr[[i, j]] = rstd[i] * (g[j] - m1 - xh[j] * m2);
        }
    }
    (dr, dgamma, dbeta)
}

/// Fixed sinusoidal position code, shape (rows, width).
pub(crate) fn positional_encoding<T: Scalar>(rows: usize, width: usize) -> Array2<T> {
    Array2::from_shape_fn((rows, width), |(t, j)| {
        let i = (j / 2) as f64;
        let angle = t as f64 / 10_000f64.powf(2.0 * i / width as f64);
        T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
