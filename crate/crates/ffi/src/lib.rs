//! C ABI for the genericdp library.
//!
//! Every fallible function returns a [`GdpStatus`]; on failure a message is
//! available from [`gdp_last_error_message`] on the calling thread. Images
//! are row-major `double` buffers of `width * height` gray values in
//! `[0, 255]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use genericdp::deconv::{hqs_deconvolve, schedule_for_sigma, DeconvProblem};
use genericdp::imagecore::{psnr, ssim, Image, Kernel};
use genericdp::model::deserialize;
use genericdp::{Error, GenericDPModel};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Panic = 6,
}

/// Opaque trained model.
pub struct GdpModel {
    inner: GenericDPModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> GdpStatus {
    match e {
        Error::Io { .. } => GdpStatus::Io,
        Error::Format { .. } | Error::Unsupported(_) | Error::Version { .. } | Error::InvalidModel(_) => {
            GdpStatus::Format
        }
        Error::Numerical(_) => GdpStatus::Numerical,
        _ => GdpStatus::InvalidArgument,
    }
}

struct Failure(GdpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GdpStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GdpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GdpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GdpStatus::Panic
        }
    }
}

unsafe fn image_from_raw(data: *const f64, width: usize, height: usize, what: &str) -> Result<Image, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = width
        .checked_mul(height)
        .ok_or_else(|| Failure(GdpStatus::InvalidArgument, "image size overflows".into()))?;
    let slice = std::slice::from_raw_parts(data, len);
    Ok(Image::new(width, height, slice.to_vec())?)
}

unsafe fn model_ref<'a>(model: *const GdpModel) -> Result<&'a GenericDPModel, Failure> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn write_image(img: &Image, out: *mut f64) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output"));
    }
    std::slice::from_raw_parts_mut(out, img.len()).copy_from_slice(img.data());
    Ok(())
}

/// Loads a model file. On success `*out` owns a handle to release with
/// [`gdp_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gdp_model_load(path: *const c_char, out: *mut *mut GdpModel) -> GdpStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(GdpStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = deserialize(path)?;
        *out = Box::into_raw(Box::new(GdpModel { inner }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`gdp_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gdp_model_free(model: *mut GdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of stages, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gdp_model_num_stages(model: *const GdpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_stages())
}

/// Number of noise levels, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gdp_model_num_levels(model: *const GdpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_levels())
}

/// Denoises `input` at noise level `sigma` into `output`.
///
/// # Safety
/// `input` and `output` must each hold `width * height` doubles.
#[no_mangle]
pub unsafe extern "C" fn gdp_denoise(
    model: *const GdpModel,
    input: *const f64,
    width: usize,
    height: usize,
    sigma: f64,
    output: *mut f64,
) -> GdpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let f = image_from_raw(input, width, height, "input")?;
        let u = m.denoise(&f, sigma)?;
        write_image(&u, output)
    })
}

/// Non-blind deconvolution of `input` blurred by the `psf_size`x`psf_size`
/// kernel `psf` (normalized to unit sum here) with noise level `sigma`.
///
/// # Safety
/// `input` and `output` must each hold `width * height` doubles and `psf`
/// `psf_size * psf_size` doubles.
#[no_mangle]
pub unsafe extern "C" fn gdp_deconvolve(
    model: *const GdpModel,
    input: *const f64,
    width: usize,
    height: usize,
    psf: *const f64,
    psf_size: usize,
    sigma: f64,
    output: *mut f64,
) -> GdpStatus {
    guard(|| {
        let m = model_ref(model)?;
        let f = image_from_raw(input, width, height, "input")?;
        if psf.is_null() {
            return Err(null("psf"));
        }
        let n = psf_size
            .checked_mul(psf_size)
            .ok_or_else(|| Failure(GdpStatus::InvalidArgument, "psf size overflows".into()))?;
        let taps = std::slice::from_raw_parts(psf, n).to_vec();
        let kernel = Kernel::new(psf_size, taps)?.normalized()?;
        let problem = DeconvProblem::new(f, kernel, sigma)?;
        let res = hqs_deconvolve(m, &problem, &schedule_for_sigma(sigma)?)?;
        write_image(&res.image, output)
    })
}

/// PSNR in dB of `a` against `b`; `+inf` for identical images.
///
/// # Safety
/// `a` and `b` must each hold `width * height` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gdp_psnr(
    a: *const f64,
    b: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
) -> GdpStatus {
    guard(|| {
        let a = image_from_raw(a, width, height, "a")?;
        let b = image_from_raw(b, width, height, "b")?;
        let v = psnr(&a, &b)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Mean SSIM of `a` against `b`.
///
/// # Safety
/// `a` and `b` must each hold `width * height` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gdp_ssim(
    a: *const f64,
    b: *const f64,
    width: usize,
    height: usize,
    out: *mut f64,
) -> GdpStatus {
    guard(|| {
        let a = image_from_raw(a, width, height, "a")?;
        let b = image_from_raw(b, width, height, "b")?;
        let v = ssim(&a, &b)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code; takes the raw value so unknown
/// codes are safe to pass.
#[no_mangle]
pub extern "C" fn gdp_status_string(status: i32) -> *const c_char {
    let s: &'static [u8] = match status {
        0 => b"ok\0",
        1 => b"null pointer\0",
        2 => b"invalid argument\0",
        3 => b"i/o error\0",
        4 => b"malformed input\0",
        5 => b"numerical failure\0",
        6 => b"internal panic\0",
        _ => b"unknown status\0",
    };
    s.as_ptr().cast()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
