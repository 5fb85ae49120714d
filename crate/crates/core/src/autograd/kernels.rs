//! Raw slice kernels shared by the forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

/// `out[m×n] += a[m×k] · b[k×n]`.
pub fn matmul_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    matmul_acc(a, b, &mut out, m, k, n);
    out
}

pub fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Geometry of a square-kernel 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }
}

/// Unfold one image `[C,H,W]` into columns `[C·k·k, OH·OW]`.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    if g.is_pointwise() {
        return x.to_vec();
    }
    let plane = g.oh * g.ow;
    let mut cols = vec![T::zero(); g.col_rows() * plane];
    for c in 0..g.channels {
        let src = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.ow + ox] = src[iy * g.w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Fold columns back into an image gradient, accumulating overlaps.
pub fn col2im_acc<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    if g.is_pointwise() {
        for (d, &c) in dx.iter_mut().zip(cols) {
            *d += c;
        }
        return;
    }
    let plane = g.oh * g.ow;
    for c in 0..g.channels {
        let dst = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[iy * g.w + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Source taps of one output coordinate under align-corners=false.
#[derive(Clone, Copy, Debug)]
pub struct Tap<T> {
    pub i0: usize,
    pub i1: usize,
    pub w0: T,
    pub w1: T,
}

pub fn bilinear_taps<T: Real>(input: usize, output: usize) -> Vec<Tap<T>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (libm::floor(src) as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let l1 = src - i0 as f64;
            Tap {
                i0,
                i1,
                w0: T::of(1.0 - l1),
                w1: T::of(l1),
            }
        })
        .collect()
}

/// Resize every `[H,W]` plane of `x` (`planes` of them).
pub fn resize_planes<T: Real>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let ty = bilinear_taps::<T>(h, oh);
    let tx = bilinear_taps::<T>(w, ow);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, a) in ty.iter().enumerate() {
            let r0 = &src[a.i0 * w..(a.i0 + 1) * w];
            let r1 = &src[a.i1 * w..(a.i1 + 1) * w];
            for (ox, b) in tx.iter().enumerate() {
                let top = r0[b.i0] * b.w0 + r0[b.i1] * b.w1;
                let bot = r1[b.i0] * b.w0 + r1[b.i1] * b.w1;
                dst[oy * ow + ox] = top * a.w0 + bot * a.w1;
            }
        }
    }
    out
}

pub fn resize_planes_backward<T: Real>(
    g: &[T],
    planes: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let ty = bilinear_taps::<T>(h, oh);
    let tx = bilinear_taps::<T>(w, ow);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let src = &g[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for (oy, a) in ty.iter().enumerate() {
            for (ox, b) in tx.iter().enumerate() {
                let v = src[oy * ow + ox];
                dst[a.i0 * w + b.i0] += v * a.w0 * b.w0;
                dst[a.i0 * w + b.i1] += v * a.w0 * b.w1;
                dst[a.i1 * w + b.i0] += v * a.w1 * b.w0;
                dst[a.i1 * w + b.i1] += v * a.w1 * b.w1;
            }
        }
    }
    dx
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
