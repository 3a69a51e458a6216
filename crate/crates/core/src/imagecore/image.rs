use crate::error::{Error, Result};

/// Grayscale image with row-major `f64` intensities.
///
/// Values are nominally in `[0, 255]` but are never clamped here; clamping
/// happens only in the metrics and when writing files.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite sample at index {bad}")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image without the finiteness scan. Callers guarantee the
    /// shape; used on hot paths where values come from finite arithmetic.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Image) -> Image {
        debug_assert!(self.same_shape(other));
        Image::from_raw(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        )
    }

    /// `self + scale * other`, in place.
    pub fn add_scaled(&mut self, scale: f64, other: &Image) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Copies out the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h} at ({x0},{y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Image::from_raw(w, h, data))
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 255.0))
    }
}

/// Square kernel of odd size, taps stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel size must be odd and positive, got {size}"
            )));
        }
        if taps.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{size}x{size} kernel needs {} taps, got {}",
                size * size,
                taps.len()
            )));
        }
        Ok(Self { size, taps })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![0.0; size * size])
    }

    /// The 1x1 kernel `[1]`, optionally zero-embedded in a larger odd size.
    pub fn delta(size: usize) -> Result<Self> {
        let mut k = Self::zeros(size)?;
        let c = size / 2;
        k.taps[c * size + c] = 1.0;
        Ok(k)
    }

    /// Embeds an arbitrary `rows`x`cols` grid into the smallest odd square
    /// kernel that holds it, aligning the grid centre `(rows/2, cols/2)`
    /// (integer division) with the kernel centre.
    pub fn from_grid(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "grid {rows}x{cols} with {} values",
                values.len()
            )));
        }
        let half = (rows / 2)
            .max(cols / 2)
            .max((rows - 1 - rows / 2).max(cols - 1 - cols / 2));
        let size = 2 * half + 1;
        let mut taps = vec![0.0; size * size];
        let oy = half - rows / 2;
        let ox = half - cols / 2;
        for y in 0..rows {
            for x in 0..cols {
                taps[(y + oy) * size + x + ox] = values[y * cols + x];
            }
        }
        Self::new(size, taps)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.taps
    }

    #[inline]
    pub fn tap(&self, row: usize, col: usize) -> f64 {
        self.taps[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Kernel) -> f64 {
        self.taps.iter().zip(&other.taps).map(|(a, b)| a * b).sum()
    }

    /// Taps reversed along both axes (the `k̄` of a filter `k`).
    pub fn rotate180(&self) -> Kernel {
        let mut taps = self.taps.clone();
        taps.reverse();
        Kernel { size: self.size, taps }
    }

    /// Scales taps to sum to one. Fails if the sum is (numerically) zero.
    pub fn normalized(&self) -> Result<Kernel> {
        let s = self.sum();
        if s.abs() < 1e-300 || !s.is_finite() {
            return Err(Error::InvalidArgument("kernel taps sum to zero".into()));
        }
        Ok(Kernel {
            size: self.size,
            taps: self.taps.iter().map(|t| t / s).collect(),
        })
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() < 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_shapes() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn rotate180_reverses_both_axes() {
        // [[1,2],[3,4]] centred in a 3x3 kernel
        let k = Kernel::new(3, vec![0., 0., 0., 0., 1., 2., 0., 3., 4.]).unwrap();
        let r = k.rotate180();
        assert_eq!(r.taps(), &[4., 3., 0., 2., 1., 0., 0., 0., 0.]);
        assert_eq!(r.rotate180(), k);
    }

    #[test]
    fn rotate180_keeps_symmetric_kernel() {
        let k = Kernel::new(3, vec![1., 2., 1., 2., 4., 2., 1., 2., 1.]).unwrap();
        assert_eq!(k.rotate180(), k);
    }

    #[test]
    fn from_grid_centres_even_grids() {
        let k = Kernel::from_grid(2, 2, &[1., 2., 3., 4.]).unwrap();
        assert_eq!(k.size(), 3);
        // grid centre (1,1) lands on kernel centre (1,1)
        assert_eq!(k.tap(1, 1), 4.0);
        assert_eq!(k.tap(0, 0), 1.0);
        let k = Kernel::from_grid(1, 3, &[1., 2., 3.]).unwrap();
        assert_eq!(k.size(), 3);
        assert_eq!(k.tap(1, 1), 2.0);
    }

    #[test]
    fn kernel_requires_odd_size() {
        assert!(Kernel::new(2, vec![0.0; 4]).is_err());
        assert!(Kernel::new(3, vec![0.0; 8]).is_err());
    }
}
