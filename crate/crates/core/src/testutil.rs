//! Dense reference operators shared by unit tests.

use crate::imagecore::rng::SplitMix64;
use crate::imagecore::{Image, Kernel};

pub fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::from_fn(w, h, |_, _| rng.next_f64() * 255.0).unwrap()
}

/// Dense matrix of same-size convolution with symmetric padding, built from
/// the definition `y[i,j] = Σ k[a,b] x̃[i+c−a, j+c−b]`.
pub fn dense_conv_symmetric(w: usize, h: usize, k: &Kernel) -> Vec<Vec<f64>> {
    let n = w * h;
    let r = k.size() as isize;
    let c = r / 2;
    let refl = |i: isize, len: isize| -> usize {
        if i < 0 {
            (-i - 1) as usize
        } else if i >= len {
            (2 * len - 1 - i) as usize
        } else {
            i as usize
        }
    };
    let mut m = vec![vec![0.0; n]; n];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let row = y as usize * w + x as usize;
            for a in 0..r {
                for b in 0..r {
                    let sy = refl(y + c - a, h as isize);
                    let sx = refl(x + c - b, w as isize);
                    m[row][sy * w + sx] += k.tap(a as usize, b as usize);
                }
            }
        }
    }
    m
}

pub fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn matvec_t(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m[0].len()];
    for (row, &vi) in m.iter().zip(v) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
