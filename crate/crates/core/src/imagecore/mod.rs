//! Image containers, file I/O, padded convolutions, FFTs, quality metrics
//! and seeded data synthesis.

pub mod conv;
pub mod fft;
mod image;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use conv::{conv2, conv2_adjoint, conv2_same_symmetric, conv2_transpose, rotate180, Boundary};
pub use fft::{fft2, fft2_image, ifft2, Spectrum};
pub use image::{Image, Kernel};
pub use io::{load_image, save_image};
pub use metrics::{psnr, ssim};
pub use synth::{add_gaussian_noise, crop_patches, synthetic_scene};
