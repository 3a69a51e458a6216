use crate::error::{Error, Result};
use crate::imagecore::{add_gaussian_noise, conv2_same_symmetric, Image, Kernel};

fn check_size(size: usize) -> Result<()> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel size must be odd, got {size}")));
    }
    Ok(())
}

/// Isotropic Gaussian blur of standard deviation `sigma` pixels, truncated
/// to `size`x`size` and normalized.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Kernel> {
    check_size(size)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let c = (size / 2) as f64;
    let taps = (0..size * size)
        .map(|k| {
            let dy = (k / size) as f64 - c;
            let dx = (k % size) as f64 - c;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    Kernel::new(size, taps)?.normalized()
}

/// Linear motion blur: a centred segment of `length` pixels at `angle_deg`
/// (counter-clockwise from the x axis), splatted bilinearly and normalized.
pub fn motion_kernel(size: usize, length: f64, angle_deg: f64) -> Result<Kernel> {
    check_size(size)?;
    if !(length.is_finite() && length >= 0.0) || length > (size - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "motion length {length} does not fit a {size}x{size} kernel"
        )));
    }
    let c = (size / 2) as f64;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut taps = vec![0.0; size * size];
    let samples = ((length * 16.0).ceil() as usize).max(1);
    for s in 0..=samples {
        let t = (s as f64 / samples as f64 - 0.5) * length;
        let x = c + t * cos;
        let y = c - t * sin;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        for (dy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0usize, 1.0 - fx), (1, fx)] {
                let (xi, yi) = (x0 as usize + dx, y0 as usize + dy);
                if xi < size && yi < size {
                    taps[yi * size + xi] += wx * wy;
                }
            }
        }
    }
    Kernel::new(size, taps)?.normalized()
}

/// Blurs with symmetric boundary handling, then adds Gaussian noise.
pub fn blur_and_noise(clean: &Image, psf: &Kernel, sigma: f64, seed: u64) -> Result<Image> {
    let blurred = conv2_same_symmetric(clean, psf)?;
    add_gaussian_noise(&blurred, sigma, seed)
}
