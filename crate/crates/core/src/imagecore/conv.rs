//! Same-size 2-D convolution with virtual padding, and its exact adjoint.
//!
//! Convolution is a true convolution (kernel flipped):
//! `y[i,j] = Σ_{a,b} k[a,b] · x̃[i + c - a, j + c - b]` with `c = r/2` and `x̃`
//! the padded input. The adjoint scatters into the padded domain and folds
//! the padding back onto the pixels it was copied from, so
//! `⟨K u, v⟩ = ⟨u, Kᵀ v⟩` holds to rounding for either boundary rule.
//!
//! The slice-level kernels here are shared with the model and the trainer.

use super::{Image, Kernel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Half-sample mirror with the edge sample repeated: `… b a | a b c … x y z | z y …`.
    #[default]
    Symmetric,
    /// Circular wrap-around.
    Periodic,
}

#[inline]
fn reflect(idx: isize, n: isize) -> usize {
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Index maps between an image and its padded copy.
#[derive(Clone, Debug)]
pub(crate) struct Padder {
    w: usize,
    h: usize,
    pad: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Padder {
    pub(crate) fn new(w: usize, h: usize, pad: usize, boundary: Boundary) -> Self {
        let map = |n: usize| -> Vec<usize> {
            (0..n + 2 * pad)
                .map(|m| {
                    let idx = m as isize - pad as isize;
                    match boundary {
                        Boundary::Symmetric => reflect(idx, n as isize),
                        Boundary::Periodic => idx.rem_euclid(n as isize) as usize,
                    }
                })
                .collect()
        };
        Self {
            w,
            h,
            pad,
            rows: map(h),
            cols: map(w),
        }
    }

    #[inline]
    pub(crate) fn padded_width(&self) -> usize {
        self.w + 2 * self.pad
    }

    #[inline]
    pub(crate) fn padded_len(&self) -> usize {
        (self.w + 2 * self.pad) * (self.h + 2 * self.pad)
    }

    pub(crate) fn pad_into(&self, src: &[f64], dst: &mut [f64]) {
        let wp = self.padded_width();
        let (w, p) = (self.w, self.pad);
        for (m, &sy) in self.rows.iter().enumerate() {
            let srow = &src[sy * w..(sy + 1) * w];
            let drow = &mut dst[m * wp..(m + 1) * wp];
            drow[p..p + w].copy_from_slice(srow);
            for n in (0..p).chain(p + w..wp) {
                drow[n] = srow[self.cols[n]];
            }
        }
    }

    pub(crate) fn padded(&self, src: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.padded_len()];
        self.pad_into(src, &mut out);
        out
    }

    /// `dst += Pᵀ q`: every padded sample is added back onto its source pixel.
    pub(crate) fn fold_add(&self, q: &[f64], dst: &mut [f64]) {
        let wp = self.padded_width();
        let (w, p) = (self.w, self.pad);
        for (m, &sy) in self.rows.iter().enumerate() {
            let qrow = &q[m * wp..(m + 1) * wp];
            let drow = &mut dst[sy * w..(sy + 1) * w];
            for (d, s) in drow.iter_mut().zip(&qrow[p..p + w]) {
                *d += s;
            }
            for n in (0..p).chain(p + w..wp) {
                drow[self.cols[n]] += qrow[n];
            }
        }
    }
}

/// `out[i,j] += Σ_{a,b} taps[a*r+b] · src[(i+a)*sw + j+b]` over an
/// `ow`×`oh` output. Each output sample accumulates its taps in row-major
/// order.
fn correlate_acc(src: &[f64], sw: usize, out: &mut [f64], ow: usize, oh: usize, taps: &[f64], r: usize) {
    for (i, dst) in out[..ow * oh].chunks_exact_mut(ow).enumerate() {
        for (a, row) in taps.chunks_exact(r).enumerate() {
            let base = (i + a) * sw;
            for (b, &t) in row.iter().enumerate() {
                let srow = &src[base + b..base + b + ow];
                for (d, x) in dst.iter_mut().zip(srow) {
                    *d += t * x;
                }
            }
        }
    }
}

/// `out[i,j] = Σ_{a,b} rot[a,b] · padded[i+a, j+b]` (overwrites `out`).
///
/// `rot` is the 180°-rotated kernel, so this realizes a true convolution of
/// the unpadded image.
pub(crate) fn correlate_valid(padded: &[f64], wp: usize, w: usize, h: usize, rot: &[f64], r: usize, out: &mut [f64]) {
    out[..w * h].iter_mut().for_each(|v| *v = 0.0);
    correlate_acc(padded, wp, out, w, h, rot, r);
}

/// Transpose of [`correlate_valid`]: `q[i+a, j+b] += rot[a,b] · v[i,j]`.
///
/// Evaluated as a gather over `v` zero-padded by `r − 1` with the taps
/// flipped back.
pub(crate) fn correlate_valid_transpose(
    v: &[f64],
    w: usize,
    h: usize,
    rot: &[f64],
    r: usize,
    q: &mut [f64],
    wp: usize,
) {
    let e = r - 1;
    let vw = w + 2 * e;
    let mut vpad = vec![0.0; vw * (h + 2 * e)];
    for i in 0..h {
        vpad[(i + e) * vw + e..(i + e) * vw + e + w].copy_from_slice(&v[i * w..(i + 1) * w]);
    }
    let flipped: Vec<f64> = rot.iter().rev().copied().collect();
    correlate_acc(&vpad, vw, q, wp, h + e, &flipped, r);
}

/// `acc[a*r+b] += Σ_{i,j} map[i,j] · padded[i+a, j+b]`, the derivative of
/// `⟨map, correlate_valid(padded, rot)⟩` with respect to `rot`.
pub(crate) fn tap_correlation(padded: &[f64], wp: usize, w: usize, h: usize, map: &[f64], r: usize, acc: &mut [f64]) {
    for a in 0..r {
        for b in 0..r {
            let mut s = 0.0;
            for i in 0..h {
                let src = &padded[(i + a) * wp + b..(i + a) * wp + b + w];
                let m = &map[i * w..(i + 1) * w];
                s += dot(src, m);
            }
            acc[a * r + b] += s;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the compiler vectorize the reduction
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

pub(crate) fn check_fits(img: &Image, k: &Kernel) -> Result<()> {
    let limit = 2 * img.width().min(img.height()) + 1;
    if k.size() > limit {
        Err(Error::KernelTooLarge {
            size: k.size(),
            width: img.width(),
            height: img.height(),
        })
    } else {
        Ok(())
    }
}

/// Same-size convolution with the given boundary extension.
pub fn conv2(img: &Image, k: &Kernel, boundary: Boundary) -> Result<Image> {
    check_fits(img, k)?;
    let (w, h, r) = (img.width(), img.height(), k.size());
    let padder = Padder::new(w, h, r / 2, boundary);
    let padded = padder.padded(img.data());
    let rot = k.rotate180();
    let mut out = vec![0.0; w * h];
    correlate_valid(&padded, padder.padded_width(), w, h, rot.taps(), r, &mut out);
    Ok(Image::from_raw(w, h, out))
}

/// Exact adjoint of [`conv2`] under the same boundary rule.
pub fn conv2_transpose(img: &Image, k: &Kernel, boundary: Boundary) -> Result<Image> {
    check_fits(img, k)?;
    let (w, h, r) = (img.width(), img.height(), k.size());
    let padder = Padder::new(w, h, r / 2, boundary);
    let rot = k.rotate180();
    let mut q = vec![0.0; padder.padded_len()];
    correlate_valid_transpose(img.data(), w, h, rot.taps(), r, &mut q, padder.padded_width());
    let mut out = vec![0.0; w * h];
    padder.fold_add(&q, &mut out);
    Ok(Image::from_raw(w, h, out))
}

/// Convolution with symmetric (edge-repeating mirror) padding.
pub fn conv2_same_symmetric(img: &Image, k: &Kernel) -> Result<Image> {
    conv2(img, k, Boundary::Symmetric)
}

/// Exact adjoint of [`conv2_same_symmetric`], computed by pad-transpose.
pub fn conv2_adjoint(img: &Image, k: &Kernel) -> Result<Image> {
    conv2_transpose(img, k, Boundary::Symmetric)
}

/// 180° rotation of a kernel's taps.
pub fn rotate180(k: &Kernel) -> Kernel {
    k.rotate180()
}
