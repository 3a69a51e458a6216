//! Seeded data synthesis: Gaussian noise, random crops, and procedural
//! test scenes.

use super::rng::SplitMix64;
use super::Image;
use crate::error::{Error, Result};

/// `img + N(0, σ²)` per pixel, unclamped.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = SplitMix64::new(seed);
    Ok(img.map(|v| v + sigma * rng.normal()))
}

/// `count` uniformly placed `size`×`size` crops. Each crop draws its x offset
/// then its y offset from one generator seeded with `seed`.
pub fn crop_patches(img: &Image, size: usize, count: usize, seed: u64) -> Result<Vec<Image>> {
    if size == 0 || size > img.width().min(img.height()) {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} does not fit a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let (nx, ny) = ((img.width() - size + 1) as u64, (img.height() - size + 1) as u64);
    (0..count)
        .map(|_| {
            let x = rng.below(nx) as usize;
            let y = rng.below(ny) as usize;
            img.crop(x, y, size, size)
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
enum Fill {
    Flat(f64),
    Ramp {
        base: f64,
        gx: f64,
        gy: f64,
        cx: f64,
        cy: f64,
    },
    Stripes {
        base: f64,
        amp: f64,
        kx: f64,
        ky: f64,
        phase: f64,
    },
}

impl Fill {
    fn value(&self, x: f64, y: f64) -> f64 {
        match *self {
            Fill::Flat(v) => v,
            Fill::Ramp { base, gx, gy, cx, cy } => base + gx * (x - cx) + gy * (y - cy),
            Fill::Stripes {
                base,
                amp,
                kx,
                ky,
                phase,
            } => base + amp * (kx * x + ky * y + phase).sin(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        cos: f64,
        sin: f64,
    },
    Rect {
        cx: f64,
        cy: f64,
        hx: f64,
        hy: f64,
        cos: f64,
        sin: f64,
    },
    Triangle([(f64, f64); 3]),
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                cos,
                sin,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = (cos * dx + sin * dy) / rx;
                let v = (-sin * dx + cos * dy) / ry;
                u * u + v * v <= 1.0
            }
            Shape::Rect {
                cx,
                cy,
                hx,
                hy,
                cos,
                sin,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                (cos * dx + sin * dy).abs() <= hx && (-sin * dx + cos * dy).abs() <= hy
            }
            Shape::Triangle(p) => {
                let edge = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
                let (d0, d1, d2) = (edge(p[0], p[1]), edge(p[1], p[2]), edge(p[2], p[0]));
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
        }
    }
}

/// Procedural 8-bit scene: a shaded background overlaid with antialiased
/// ellipses, rectangles and triangles filled flat, with ramps, or with
/// oriented stripe texture. Output is integer valued in `[0, 255]`, so it
/// survives a PGM round trip unchanged.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("scene dimensions must be positive".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let (wf, hf) = (width as f64, height as f64);
    let scale = wf.max(hf);
    let mut uni = |lo: f64, hi: f64| lo + (hi - lo) * rng.next_f64();

    let bg_base = uni(60.0, 190.0);
    let bg_gx = uni(-60.0, 60.0) / scale;
    let bg_gy = uni(-60.0, 60.0) / scale;
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let period = uni(0.25, 1.0) * scale;
            let angle = uni(0.0, std::f64::consts::PI);
            let k = std::f64::consts::TAU / period;
            (uni(3.0, 12.0), k * angle.cos(), k * angle.sin(), uni(0.0, 6.3))
        })
        .collect();

    let num_shapes = 8 + (uni(0.0, 1.0) * 9.0) as usize;
    let mut layers: Vec<(Shape, Fill)> = Vec::with_capacity(num_shapes);
    for _ in 0..num_shapes {
        let cx = uni(-0.1, 1.1) * wf;
        let cy = uni(-0.1, 1.1) * hf;
        let size = scale * uni(0.05, 0.3);
        let angle = uni(0.0, std::f64::consts::PI);
        let (sin, cos) = angle.sin_cos();
        let kind = uni(0.0, 3.0) as usize;
        let shape = match kind {
            0 => Shape::Ellipse {
                cx,
                cy,
                rx: size,
                ry: size * uni(0.3, 1.0),
                cos,
                sin,
            },
            1 => Shape::Rect {
                cx,
                cy,
                hx: size,
                hy: size * uni(0.2, 1.0),
                cos,
                sin,
            },
            _ => Shape::Triangle([
                (cx + uni(-1.5, 1.5) * size, cy + uni(-1.5, 1.5) * size),
                (cx + uni(-1.5, 1.5) * size, cy + uni(-1.5, 1.5) * size),
                (cx + uni(-1.5, 1.5) * size, cy + uni(-1.5, 1.5) * size),
            ]),
        };
        let base = uni(20.0, 235.0);
        let fill = match uni(0.0, 10.0) as usize {
            0..=3 => Fill::Flat(base),
            4..=6 => Fill::Ramp {
                base,
                gx: uni(-1.0, 1.0) * 40.0 / size,
                gy: uni(-1.0, 1.0) * 40.0 / size,
                cx,
                cy,
            },
            _ => {
                let period = uni(3.0, 10.0);
                let angle = uni(0.0, std::f64::consts::PI);
                let k = std::f64::consts::TAU / period;
                Fill::Stripes {
                    base,
                    amp: uni(8.0, 30.0),
                    kx: k * angle.cos(),
                    ky: k * angle.sin(),
                    phase: uni(0.0, 6.3),
                }
            }
        };
        layers.push((shape, fill));
    }

    const SS: usize = 3;
    let mut data = Vec::with_capacity(width * height);
    for py in 0..height {
        for px in 0..width {
            let mut acc = 0.0;
            for sy in 0..SS {
                for sx in 0..SS {
                    let x = px as f64 + (sx as f64 + 0.5) / SS as f64;
                    let y = py as f64 + (sy as f64 + 0.5) / SS as f64;
                    let mut v = bg_base + bg_gx * x + bg_gy * y;
                    for &(amp, kx, ky, ph) in &waves {
                        v += amp * (kx * x + ky * y + ph).sin();
                    }
                    for (shape, fill) in &layers {
                        if shape.contains(x, y) {
                            v = fill.value(x, y);
                        }
                    }
                    acc += v;
                }
            }
            data.push((acc / (SS * SS) as f64).round().clamp(0.0, 255.0));
        }
    }
    Image::new(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::metrics::psnr;

    #[test]
    fn zero_sigma_is_identity() {
        let img = synthetic_scene(16, 16, 1).unwrap();
        assert_eq!(add_gaussian_noise(&img, 0.0, 5).unwrap(), img);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let img = Image::filled(8, 8, 100.0).unwrap();
        let a = add_gaussian_noise(&img, 10.0, 77).unwrap();
        let b = add_gaussian_noise(&img, 10.0, 77).unwrap();
        let c = add_gaussian_noise(&img, 10.0, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let img = Image::zeros(2, 2).unwrap();
        assert!(add_gaussian_noise(&img, -1.0, 0).is_err());
        assert!(add_gaussian_noise(&img, f64::NAN, 0).is_err());
    }

    #[test]
    fn noise_psnr_matches_sample_statistics() {
        // mid-gray keeps the clamp inactive at σ=25
        let img = Image::filled(256, 256, 128.0).unwrap();
        let noisy = add_gaussian_noise(&img, 25.0, 2024).unwrap();
        let p = psnr(&img, &noisy).unwrap();
        assert!((p - 20.0 * (255.0f64 / 25.0).log10()).abs() < 0.3, "{p}");
    }

    #[test]
    fn full_size_crop_copies_image() {
        let img = synthetic_scene(12, 12, 3).unwrap();
        let patches = crop_patches(&img, 12, 3, 9).unwrap();
        assert_eq!(patches.len(), 3);
        assert!(patches.iter().all(|p| *p == img));
    }

    #[test]
    fn crops_are_deterministic_and_bounded() {
        let img = synthetic_scene(40, 30, 3).unwrap();
        let a = crop_patches(&img, 10, 5, 1).unwrap();
        let b = crop_patches(&img, 10, 5, 1).unwrap();
        assert_eq!(a, b);
        assert!(crop_patches(&img, 31, 1, 1).is_err());
    }

    #[test]
    fn scenes_are_integer_valued_and_seeded() {
        let a = synthetic_scene(32, 24, 5).unwrap();
        assert_eq!(a, synthetic_scene(32, 24, 5).unwrap());
        assert_ne!(a, synthetic_scene(32, 24, 6).unwrap());
        assert!(a.data().iter().all(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v)));
    }
}
