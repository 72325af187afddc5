//! Slice-level forward and backward kernels behind the graph operators.
//!
//! All image buffers are single-sample, channels x height x width,
//! row-major. Convolution is same-padded cross-correlation lowered to a
//! matrix product through `im2col`.

use crate::real::Real;

/// Unfolds a `c x h x w` image into a `(c*k*k) x (h*w)` patch matrix with
/// `(k-1)/2` zero padding.
pub fn im2col<T: Real>(input: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![T::zero(); c * k * k * hw];
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = sy as usize * w;
                    let sx0 = (x0 as isize + dx) as usize;
                    dst[y * w + x0..y * w + x1]
                        .copy_from_slice(&plane[src_row + sx0..src_row + sx0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto the image,
/// accumulating into `out`.
pub fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, out: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = sy as usize * w;
                    let sx0 = (x0 as isize + dx) as usize;
                    for (d, &s) in plane[dst_row + sx0..dst_row + sx0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&src[y * w + x0..y * w + x1])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Geometry of one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvDims {
    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn hw(&self) -> usize {
        self.height * self.width
    }
}

/// Forward convolution. Returns the output and the patch matrix that the
/// backward pass needs.
pub fn conv2d_forward<T: Real>(
    input: &[T],
    kernel: &[T],
    bias: &[T],
    d: ConvDims,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(input, d.in_channels, d.height, d.width, d.kernel);
    let hw = d.hw();
    let mut out = vec![T::zero(); d.out_channels * hw];
    for (f, row) in out.chunks_mut(hw).enumerate() {
        row.fill(bias[f]);
    }
    let p = d.patch() as isize;
    T::gemm(
        d.out_channels,
        d.patch(),
        hw,
        kernel,
        p,
        1,
        &cols,
        hw as isize,
        1,
        T::one(),
        &mut out,
        hw as isize,
        1,
    );
    (out, cols)
}

pub struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

/// Backward convolution from the saved patch matrix.
pub fn conv2d_backward<T: Real>(
    cols: &[T],
    kernel: &[T],
    grad_out: &[T],
    d: ConvDims,
    want_input: bool,
) -> ConvGrads<T> {
    let hw = d.hw();
    let p = d.patch();
    let mut gk = vec![T::zero(); d.out_channels * p];
    // dK = dOut * cols^T
    T::gemm(
        d.out_channels,
        hw,
        p,
        grad_out,
        hw as isize,
        1,
        cols,
        1,
        hw as isize,
        T::zero(),
        &mut gk,
        p as isize,
        1,
    );
    let gb = grad_out.chunks(hw).map(|row| row.iter().copied().sum()).collect();
    let input = want_input.then(|| {
        // dCols = K^T * dOut
        let mut gcols = vec![T::zero(); p * hw];
        T::gemm(
            p,
            d.out_channels,
            hw,
            kernel,
            1,
            p as isize,
            grad_out,
            hw as isize,
            1,
            T::zero(),
            &mut gcols,
            hw as isize,
            1,
        );
        let mut gi = vec![T::zero(); d.in_channels * hw];
        col2im(&gcols, d.in_channels, d.height, d.width, d.kernel, &mut gi);
        gi
    });
    ConvGrads {
        input,
        kernel: gk,
        bias: gb,
    }
}

/// 2x2 max pooling with stride 2. Returns the pooled map and, for every
/// output cell, the flat input index that won (first in row-major window
/// order on ties).
pub fn max_pool2x2_forward<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let base = ci * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for idx in [
                    base + 2 * y * w + 2 * x + 1,
                    base + (2 * y + 1) * w + 2 * x,
                    base + (2 * y + 1) * w + 2 * x + 1,
                ] {
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub fn max_pool2x2_backward<T: Real>(argmax: &[usize], grad_out: &[T], input_len: usize) -> Vec<T> {
    let mut g = vec![T::zero(); input_len];
    for (&i, &go) in argmax.iter().zip(grad_out) {
        g[i] += go;
    }
    g
}

pub fn upsample2x_forward<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ci in 0..c {
        for y in 0..oh {
            let src = &input[ci * h * w + (y / 2) * w..ci * h * w + (y / 2) * w + w];
            let dst = &mut out[ci * oh * ow + y * ow..ci * oh * ow + (y + 1) * ow];
            for (x, v) in dst.iter_mut().enumerate() {
                *v = src[x / 2];
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Real>(grad_out: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut g = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                g[ci * h * w + (y / 2) * w + x / 2] += grad_out[ci * oh * ow + y * ow + x];
            }
        }
    }
    g
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
