//! C ABI over the `matting` crate.
//!
//! Every fallible function returns a `MattingStatus`; on failure a message is
//! available from `matting_last_error_message` on the same thread. Handles
//! are opaque and must be released with `matting_image_free`. Alpha mattes
//! and trimaps are single-channel images.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use matting::alpha::{estimate_alpha_detailed, Method, MethodParams, SolverConfig};
use matting::foreground::{estimate_foreground_cf, estimate_foreground_ml, CF_REG, ML_REG, ML_SWEEPS};
use matting::image::{load_image, save_image, stack_images, AlphaMatte, ColorMode, Image, Trimap};
use matting::solver::PreconditionerKind;
use matting::Error;

pub const MATTING_COLOR_RGB: u32 = 0;
pub const MATTING_COLOR_GRAY: u32 = 1;

pub const MATTING_METHOD_CF: u32 = 0;
pub const MATTING_METHOD_KNN: u32 = 1;
pub const MATTING_METHOD_RW: u32 = 2;
pub const MATTING_METHOD_LBDM: u32 = 3;
pub const MATTING_METHOD_LKM: u32 = 4;

/// Picks ichol for assembled Laplacians and Jacobi for lkm.
pub const MATTING_PRECOND_DEFAULT: u32 = 0;
pub const MATTING_PRECOND_NONE: u32 = 1;
pub const MATTING_PRECOND_JACOBI: u32 = 2;
pub const MATTING_PRECOND_ICHOL: u32 = 3;
pub const MATTING_PRECOND_VCYCLE: u32 = 4;

pub const MATTING_FOREGROUND_CF: u32 = 0;
pub const MATTING_FOREGROUND_ML: u32 = 1;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MattingStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    DimensionMismatch = 4,
    Solver = 5,
    InvalidInput = 6,
    Panic = 7,
}

/// Opaque image handle.
pub struct MattingImage {
    inner: Image,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MattingSolveInfo {
    pub iterations: usize,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub peak_bytes: usize,
}

/// Optional tuning for `matting_estimate_alpha`. Zero or negative numeric
/// fields select the library defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MattingAlphaOptions {
    pub method: u32,
    pub preconditioner: u32,
    pub lambda: f64,
    pub atol: f64,
    pub eps: f64,
    pub radius: usize,
    pub max_iter: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MattingStatus {
    match err {
        Error::NotFound(_) | Error::Io { .. } | Error::Decode(_) | Error::Encode(_) | Error::Csv(_) => MattingStatus::Io,
        Error::DimensionMismatch(_) => MattingStatus::DimensionMismatch,
        Error::Breakdown { .. } | Error::NotFactorizable { .. } | Error::FillLimitExceeded { .. } => MattingStatus::Solver,
        Error::InvalidParameter(_) => MattingStatus::InvalidArgument,
        _ => MattingStatus::InvalidInput,
    }
}

struct Failure(MattingStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MattingStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MattingStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MattingStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MattingStatus::Panic
        }
    }
}

unsafe fn image_ref<'a>(p: *const MattingImage, what: &str) -> Result<&'a Image, Failure> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| Failure(MattingStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure(MattingStatus::NullPointer, "path is null".into()));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn put(out: *mut *mut MattingImage, image: Image) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(MattingStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(MattingImage { inner: image }));
    Ok(())
}

fn method_of(code: u32) -> Result<Method, Failure> {
    Ok(match code {
        MATTING_METHOD_CF => Method::Cf,
        MATTING_METHOD_KNN => Method::Knn,
        MATTING_METHOD_RW => Method::Rw,
        MATTING_METHOD_LBDM => Method::Lbdm,
        MATTING_METHOD_LKM => Method::Lkm,
        _ => return Err(invalid(format!("unknown method code {code}"))),
    })
}

fn precond_of(code: u32) -> Result<Option<PreconditionerKind>, Failure> {
    Ok(match code {
        MATTING_PRECOND_DEFAULT => None,
        MATTING_PRECOND_NONE => Some(PreconditionerKind::None),
        MATTING_PRECOND_JACOBI => Some(PreconditionerKind::Jacobi),
        MATTING_PRECOND_ICHOL => Some(PreconditionerKind::Ichol),
        MATTING_PRECOND_VCYCLE => Some(PreconditionerKind::Vcycle),
        _ => return Err(invalid(format!("unknown preconditioner code {code}"))),
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn matting_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a PNG as RGB (`MATTING_COLOR_RGB`) or luma (`MATTING_COLOR_GRAY`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn matting_image_load(path: *const c_char, color_mode: u32, out: *mut *mut MattingImage) -> MattingStatus {
    guard(|| {
        let path = path_arg(path)?;
        let mode = match color_mode {
            MATTING_COLOR_RGB => ColorMode::Rgb,
            MATTING_COLOR_GRAY => ColorMode::Gray,
            _ => return Err(invalid(format!("unknown color mode {color_mode}"))),
        };
        put(out, load_image(path, mode)?)
    })
}

/// Copies `width·height·channels` interleaved samples in `[0, 1]`.
///
/// # Safety
/// `data` must point to that many readable doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn matting_image_from_data(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f64,
    out: *mut *mut MattingImage,
) -> MattingStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure(MattingStatus::NullPointer, "data is null".into()));
        }
        let len = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| invalid("image size overflows"))?;
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        put(out, Image::new(width, height, channels, samples)?)
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `image` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn matting_image_free(image: *mut MattingImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// # Safety
/// `image` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn matting_image_width(image: *const MattingImage) -> usize {
    image.as_ref().map_or(0, |h| h.inner.width())
}

/// # Safety
/// `image` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn matting_image_height(image: *const MattingImage) -> usize {
    image.as_ref().map_or(0, |h| h.inner.height())
}

/// # Safety
/// `image` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn matting_image_channels(image: *const MattingImage) -> usize {
    image.as_ref().map_or(0, |h| h.inner.channels())
}

/// Copies the interleaved samples into `out`, which must hold exactly
/// `width·height·channels` doubles.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn matting_image_copy_data(image: *const MattingImage, out: *mut f64, len: usize) -> MattingStatus {
    guard(|| {
        let img = image_ref(image, "image")?;
        if out.is_null() {
            return Err(Failure(MattingStatus::NullPointer, "output buffer is null".into()));
        }
        if len != img.data().len() {
            return Err(Failure(
                MattingStatus::DimensionMismatch,
                format!("buffer holds {len} values, image has {}", img.data().len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(img.data());
        Ok(())
    })
}

/// Writes an 8-bit PNG.
///
/// # Safety
/// `image` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn matting_image_save(image: *const MattingImage, path: *const c_char) -> MattingStatus {
    guard(|| {
        let img = image_ref(image, "image")?;
        save_image(path_arg(path)?, img)?;
        Ok(())
    })
}

/// Default options: closed-form method, default preconditioner and weights.
#[no_mangle]
pub extern "C" fn matting_alpha_options_default() -> MattingAlphaOptions {
    MattingAlphaOptions {
        method: MATTING_METHOD_CF,
        preconditioner: MATTING_PRECOND_DEFAULT,
        ..MattingAlphaOptions::default()
    }
}

/// Estimates a single-channel alpha matte from an RGB image and a
/// single-channel trimap. `options` and `info` may be null.
///
/// # Safety
/// Handles must be live; `alpha_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matting_estimate_alpha(
    image: *const MattingImage,
    trimap: *const MattingImage,
    options: *const MattingAlphaOptions,
    alpha_out: *mut *mut MattingImage,
    info: *mut MattingSolveInfo,
) -> MattingStatus {
    guard(|| {
        let img = image_ref(image, "image")?;
        let tri = Trimap::from_image(image_ref(trimap, "trimap")?)?;
        let opts = options.as_ref().copied().unwrap_or_else(|| matting_alpha_options_default());
        let mut params = MethodParams::new(method_of(opts.method)?);
        if opts.lambda > 0.0 {
            params.lambda = opts.lambda;
        }
        if opts.eps > 0.0 {
            params.eps = opts.eps;
        }
        if opts.radius > 0 {
            params.radius = opts.radius;
        }
        let mut config = SolverConfig {
            preconditioner: precond_of(opts.preconditioner)?,
            atol: (opts.atol > 0.0).then_some(opts.atol),
            ..SolverConfig::default()
        };
        if opts.max_iter > 0 {
            config.max_iter = opts.max_iter;
        }
        let est = estimate_alpha_detailed(img, &tri, &params, &config)?;
        if let Some(info) = info.as_mut() {
            *info = MattingSolveInfo {
                iterations: est.report.iterations,
                residual_norm: est.report.residual_norm,
                tolerance: est.report.tolerance,
                converged: est.report.converged,
                build_seconds: est.times.build_s,
                solve_seconds: est.times.setup_s + est.times.solve_s,
                peak_bytes: est.report.peak_bytes,
            };
        }
        put(alpha_out, est.matte.to_image())
    })
}

/// Estimates foreground and, if `background_out` is non-null, background
/// colors with `MATTING_FOREGROUND_CF` or `MATTING_FOREGROUND_ML` defaults.
///
/// # Safety
/// Handles must be live; `foreground_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matting_estimate_foreground(
    image: *const MattingImage,
    alpha: *const MattingImage,
    method: u32,
    foreground_out: *mut *mut MattingImage,
    background_out: *mut *mut MattingImage,
) -> MattingStatus {
    guard(|| {
        let img = image_ref(image, "image")?;
        let matte = AlphaMatte::from_image(image_ref(alpha, "alpha")?)?;
        if foreground_out.is_null() {
            return Err(Failure(MattingStatus::NullPointer, "foreground output is null".into()));
        }
        let res = match method {
            MATTING_FOREGROUND_CF => estimate_foreground_cf(img, &matte, CF_REG, &SolverConfig::default())?,
            MATTING_FOREGROUND_ML => estimate_foreground_ml(img, &matte, ML_REG, ML_SWEEPS)?,
            _ => return Err(invalid(format!("unknown foreground method {method}"))),
        };
        put(foreground_out, res.foreground)?;
        if !background_out.is_null() {
            put(background_out, res.background)?;
        }
        Ok(())
    })
}

/// Combines an RGB foreground with a single-channel alpha into RGBA
/// (straight alpha).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn matting_stack_images(
    foreground: *const MattingImage,
    alpha: *const MattingImage,
    out: *mut *mut MattingImage,
) -> MattingStatus {
    guard(|| {
        let fg = image_ref(foreground, "foreground")?;
        let matte = AlphaMatte::from_image(image_ref(alpha, "alpha")?)?;
        put(out, stack_images(fg, &matte)?)
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn matting_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
