//! 2-D discrete Fourier transforms on row-major grids.
//!
//! Forward transform is unnormalized (DC bin = sum of samples); the inverse
//! divides by the sample count.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::Image;

/// Complex row-major grid, typically a spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), width * height, "spectrum shape");
        Self { width, height, data }
    }

    pub fn from_image(img: &Image) -> Self {
        Self::new(
            img.width(),
            img.height(),
            img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    /// Real parts as an image.
    pub fn real_image(&self) -> Image {
        Image::from_raw(self.width, self.height, self.data.iter().map(|c| c.re).collect())
    }
}

fn transform_rows(data: &mut [Complex64], width: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        fft.process_with_scratch(row, &mut scratch);
    }
}

fn transpose(src: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); src.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = src[y * width + x];
        }
    }
    out
}

fn transform(grid: &Spectrum, direction: FftDirection) -> Spectrum {
    let (w, h) = (grid.width, grid.height);
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);
    let mut data = grid.data.clone();
    transform_rows(&mut data, w, row_fft.as_ref());
    let mut t = transpose(&data, w, h);
    transform_rows(&mut t, h, col_fft.as_ref());
    Spectrum::new(w, h, transpose(&t, h, w))
}

pub fn fft2(grid: &Spectrum) -> Spectrum {
    transform(grid, FftDirection::Forward)
}

pub fn ifft2(grid: &Spectrum) -> Spectrum {
    let mut out = transform(grid, FftDirection::Inverse);
    let scale = 1.0 / (grid.width * grid.height) as f64;
    out.data.iter_mut().for_each(|c| *c *= scale);
    out
}

pub fn fft2_image(img: &Image) -> Spectrum {
    fft2(&Spectrum::from_image(img))
}
