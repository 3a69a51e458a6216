//! Non-blind deconvolution by half-quadratic splitting: a diffusion step of
//! the trained model alternates with a closed-form FFT solve of the data
//! subproblem.

mod kernels;
mod psf;

#[cfg(test)]
mod tests;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imagecore::{conv2, conv2_transpose, fft2, fft2_image, ifft2, Boundary, Image, Kernel, Spectrum};
use crate::model::GenericDPModel;

pub use kernels::{blur_and_noise, gaussian_kernel, motion_kernel};
pub use psf::{format_psf, load_psf, parse_psf, LoadedPsf};

/// Noise levels with a tabulated schedule.
pub const SCHEDULE_SIGMAS: [f64; 4] = [2.55, 5.10, 7.65, 10.20];
const SCHEDULE_LAMBDAS: [f64; 4] = [100.0, 25.0, 100.0 / 9.0, 6.25];
const SCHEDULE_GAMMAS: [f64; 4] = [1.8, 1.7, 1.6, 1.5];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HqsSchedule {
    /// Weight λ of the data term.
    pub lambda_data: f64,
    /// Growth factor of the coupling weight, `β_t = γ^(t−1)`.
    pub gamma: f64,
    /// Number of HQS iterations; `None` runs one per model stage.
    pub iterations: Option<usize>,
}

impl HqsSchedule {
    pub fn new(lambda_data: f64, gamma: f64, iterations: Option<usize>) -> Result<Self> {
        let s = Self {
            lambda_data,
            gamma,
            iterations,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_data.is_finite() && self.lambda_data > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "data weight must be positive, got {}",
                self.lambda_data
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        if self.iterations == Some(0) {
            return Err(Error::InvalidArgument("at least one HQS iteration is required".into()));
        }
        Ok(())
    }

    /// `β_t` for 1-based iteration `t`.
    pub fn beta(&self, t: usize) -> f64 {
        self.gamma.powi(t as i32 - 1)
    }

    /// `λ / β_t`.
    pub fn lambda1(&self, t: usize) -> f64 {
        self.lambda_data / self.beta(t)
    }
}

/// Schedule for blur noise level `sigma`: exact at the tabulated levels,
/// linear in between, clamped outside.
pub fn schedule_for_sigma(sigma: f64) -> Result<HqsSchedule> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    let s = &SCHEDULE_SIGMAS;
    let (lambda_data, gamma) = if sigma <= s[0] {
        (SCHEDULE_LAMBDAS[0], SCHEDULE_GAMMAS[0])
    } else if sigma >= s[3] {
        (SCHEDULE_LAMBDAS[3], SCHEDULE_GAMMAS[3])
    } else {
        let k = s.windows(2).position(|p| sigma <= p[1]).expect("sigma inside table");
        if sigma == s[k + 1] {
            (SCHEDULE_LAMBDAS[k + 1], SCHEDULE_GAMMAS[k + 1])
        } else {
            let a = (sigma - s[k]) / (s[k + 1] - s[k]);
            let lerp = |v: &[f64; 4]| v[k] + a * (v[k + 1] - v[k]);
            (lerp(&SCHEDULE_LAMBDAS), lerp(&SCHEDULE_GAMMAS))
        }
    };
    Ok(HqsSchedule {
        lambda_data,
        gamma,
        iterations: None,
    })
}

/// Whether `sigma` lies outside the tabulated range (the schedule is then
/// clamped).
pub fn schedule_is_clamped(sigma: f64) -> bool {
    !(SCHEDULE_SIGMAS[0]..=SCHEDULE_SIGMAS[3]).contains(&sigma)
}

#[derive(Clone, Debug)]
pub struct DeconvProblem {
    pub blurred: Image,
    pub psf: Kernel,
    pub noise_sigma: f64,
}

impl DeconvProblem {
    pub fn new(blurred: Image, psf: Kernel, noise_sigma: f64) -> Result<Self> {
        let p = Self {
            blurred,
            psf,
            noise_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_psf(&self.psf, self.blurred.width(), self.blurred.height())?;
        if (self.psf.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "psf taps sum to {}, expected 1",
                self.psf.sum()
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn psf_has_negative_taps(&self) -> bool {
        self.psf.taps().iter().any(|&v| v < 0.0)
    }
}

fn check_psf(psf: &Kernel, width: usize, height: usize) -> Result<()> {
    if psf.size() >= width || psf.size() >= height {
        return Err(Error::KernelTooLarge {
            size: psf.size(),
            width,
            height,
        });
    }
    Ok(())
}

/// Transfer function of `psf` on a `width`x`height` periodic grid: the
/// kernel centre goes to index `(0, 0)`.
pub fn psf_to_otf(psf: &Kernel, width: usize, height: usize) -> Result<Spectrum> {
    check_psf(psf, width, height)?;
    let r = psf.size();
    let c = r / 2;
    let mut grid = vec![Complex64::default(); width * height];
    for a in 0..r {
        for b in 0..r {
            let y = (a + height - c) % height;
            let x = (b + width - c) % width;
            grid[y * width + x].re += psf.tap(a, b);
        }
    }
    Ok(fft2(&Spectrum::new(width, height, grid)))
}

/// Solves `(λ1 HᵀH + I) u = λ1 Hᵀ f + z` with periodic `H` in the Fourier
/// domain.
pub fn u_subproblem_solve(z: &Image, f: &Image, otf: &Spectrum, lambda1: f64) -> Result<Image> {
    z.ensure_same_shape(f, "u_subproblem_solve")?;
    if otf.width() != z.width() || otf.height() != z.height() {
        return Err(Error::DimensionMismatch(format!(
            "otf {}x{} vs image {}x{}",
            otf.width(),
            otf.height(),
            z.width(),
            z.height()
        )));
    }
    if !(lambda1.is_finite() && lambda1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda1 must be nonnegative, got {lambda1}"
        )));
    }
    if lambda1 == 0.0 {
        return Ok(z.clone());
    }
    let ff = fft2_image(f);
    let fz = fft2_image(z);
    let data = otf
        .data()
        .iter()
        .zip(ff.data())
        .zip(fz.data())
        .map(|((h, fv), zv)| (lambda1 * h.conj() * fv + zv) / (lambda1 * h.norm_sqr() + 1.0))
        .collect();
    Ok(ifft2(&Spectrum::new(z.width(), z.height(), data)).real_image())
}

/// `‖(λ1 HᵀH + I) u − (λ1 Hᵀ f + z)‖ / ‖λ1 Hᵀ f + z‖`, evaluated with
/// spatial periodic convolutions.
pub fn normal_equation_residual(u: &Image, z: &Image, f: &Image, psf: &Kernel, lambda1: f64) -> Result<f64> {
    u.ensure_same_shape(z, "normal_equation_residual")?;
    u.ensure_same_shape(f, "normal_equation_residual")?;
    let hth_u = conv2_transpose(&conv2(u, psf, Boundary::Periodic)?, psf, Boundary::Periodic)?;
    let ht_f = conv2_transpose(f, psf, Boundary::Periodic)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (((&a, &uv), &b), &zv) in hth_u.data().iter().zip(u.data()).zip(ht_f.data()).zip(z.data()) {
        let rhs = lambda1 * b + zv;
        let lhs = lambda1 * a + uv;
        num += (lhs - rhs).powi(2);
        den += rhs * rhs;
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

fn taper_profile(n: usize, radius: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let d = i.min(n - 1 - i);
            if d >= radius {
                1.0
            } else {
                0.5 - 0.5 * (std::f64::consts::PI * (d + 1) as f64 / (radius + 1) as f64).cos()
            }
        })
        .collect()
}

/// Blends `f` toward its periodic blur within one psf radius of the
/// border, with raised-cosine weights.
pub fn edge_taper(f: &Image, psf: &Kernel) -> Result<Image> {
    check_psf(psf, f.width(), f.height())?;
    let (w, h) = (f.width(), f.height());
    let radius = psf.radius();
    if radius == 0 {
        return Ok(f.clone());
    }
    let blurred = conv2(f, psf, Boundary::Periodic)?;
    let wx = taper_profile(w, radius);
    let wy = taper_profile(h, radius);
    let mut out = f.clone();
    for y in 0..h {
        for x in 0..w {
            let a = wx[x] * wy[y];
            if a < 1.0 {
                out.set(x, y, a * f.get(x, y) + (1.0 - a) * blurred.get(x, y));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DeconvResult {
    pub image: Image,
    /// `β_t` of every iteration.
    pub betas: Vec<f64>,
    /// `λ / β_t` of every iteration.
    pub lambda1: Vec<f64>,
    /// Relative normal-equation residual of every u-update.
    pub residuals: Vec<f64>,
    /// Set when the model has no diffusion term.
    pub zero_model: bool,
}

/// Half-quadratic splitting: `u_0` is the edge-tapered observation, and
/// iteration `t` runs stage `t`'s diffusion step followed by the exact
/// u-update with `λ1 = λ / γ^(t−1)`.
pub fn hqs_deconvolve(model: &GenericDPModel, problem: &DeconvProblem, schedule: &HqsSchedule) -> Result<DeconvResult> {
    problem.validate()?;
    schedule.validate()?;
    let iters = schedule.iterations.unwrap_or(model.num_stages());
    if iters > model.num_stages() {
        return Err(Error::InvalidArgument(format!(
            "{iters} HQS iterations requested but the model has {} stages",
            model.num_stages()
        )));
    }
    let f = &problem.blurred;
    let otf = psf_to_otf(&problem.psf, f.width(), f.height())?;
    let observed = edge_taper(f, &problem.psf)?;
    let mut u = observed.clone();
    let mut betas = Vec::with_capacity(iters);
    let mut lambda1 = Vec::with_capacity(iters);
    let mut residuals = Vec::with_capacity(iters);
    for t in 1..=iters {
        let z = model.diffusion_only_step(t, &u)?;
        let l1 = schedule.lambda1(t);
        u = u_subproblem_solve(&z, &observed, &otf, l1)?;
        let res = normal_equation_residual(&u, &z, &observed, &problem.psf, l1)?;
        debug_assert!(res < 1e-8, "u-update residual {res} at iteration {t}");
        if !u.data().iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite iterate at HQS iteration {t}")));
        }
        betas.push(schedule.beta(t));
        lambda1.push(l1);
        residuals.push(res);
    }
    Ok(DeconvResult {
        image: u,
        betas,
        lambda1,
        residuals,
        zero_model: model.is_zero_diffusion(),
    })
}
