//! C ABI for the deblurring toolkit: opaque handles, integer error codes,
//! and a thread-local last-error message. All functions are
//! null-safe; ownership of returned handles passes to the caller, who must
//! release them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use libc::{c_char, c_double, c_int, size_t};

use deblur_core::blending::{blend, BlendConfig};
use deblur_core::inference::restore;
use deblur_core::io::{load_image, save_image};
use deblur_core::metrics::{psnr, ssim};
use deblur_core::sharpness::{index_j, metric_q, QConfig};
use deblur_core::{FilterBank, Image};

/// Success.
pub const DEBLUR_OK: c_int = 0;
/// A required pointer argument was null.
pub const DEBLUR_ERR_NULL_ARG: c_int = 1;
/// A path was not valid UTF-8.
pub const DEBLUR_ERR_UTF8: c_int = 2;
/// File could not be read, written, or decoded.
pub const DEBLUR_ERR_IO: c_int = 3;
/// Invalid argument or failed operation; see deblur_last_error().
pub const DEBLUR_ERR_INVALID: c_int = 4;

/// Opaque grayscale image handle (values in [0, 1], row-major).
pub struct DeblurImage(Image);

/// Opaque learned filter bank handle.
pub struct DeblurBank(FilterBank);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', "?");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).expect("nul bytes removed");
    });
}

fn fail(code: c_int, msg: &str) -> c_int {
    set_error(msg);
    code
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn deblur_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, c_int> {
    if path.is_null() {
        set_error("path is null");
        return Err(DEBLUR_ERR_NULL_ARG);
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(DEBLUR_ERR_UTF8)
        }
    }
}

/// Load a grayscale image (PNG or PGM) from `path` into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_image_load(
    path: *const c_char,
    out: *mut *mut DeblurImage,
) -> c_int {
    if out.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "out is null");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match load_image(path) {
        Ok(img) => {
            *out = Box::into_raw(Box::new(DeblurImage(img)));
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_IO, &e.to_string()),
    }
}

/// Save an image as 8-bit grayscale PNG.
///
/// # Safety
/// `image` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn deblur_image_save(
    image: *const DeblurImage,
    path: *const c_char,
) -> c_int {
    if image.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "image is null");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match save_image(&(*image).0, path) {
        Ok(()) => DEBLUR_OK,
        Err(e) => fail(DEBLUR_ERR_IO, &e.to_string()),
    }
}

/// Build an image from a row-major buffer of `width * height` values;
/// values are clamped to [0, 1].
///
/// # Safety
/// `data` must point to `width * height` readable doubles; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_image_new(
    width: size_t,
    height: size_t,
    data: *const c_double,
    out: *mut *mut DeblurImage,
) -> c_int {
    if data.is_null() || out.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "data or out is null");
    }
    let buf = std::slice::from_raw_parts(data, width * height).to_vec();
    match Image::new(width, height, buf) {
        Ok(img) => {
            *out = Box::into_raw(Box::new(DeblurImage(img)));
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_INVALID, &e.to_string()),
    }
}

/// Image width in pixels; 0 for a null handle.
#[no_mangle]
pub extern "C" fn deblur_image_width(image: *const DeblurImage) -> size_t {
    if image.is_null() {
        return 0;
    }
    unsafe { (*image).0.width() }
}

/// Image height in pixels; 0 for a null handle.
#[no_mangle]
pub extern "C" fn deblur_image_height(image: *const DeblurImage) -> size_t {
    if image.is_null() {
        return 0;
    }
    unsafe { (*image).0.height() }
}

/// Copy the image's pixels into `buf`, which must hold `len >= width * height`
/// doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn deblur_image_pixels(
    image: *const DeblurImage,
    buf: *mut c_double,
    len: size_t,
) -> c_int {
    if image.is_null() || buf.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "image or buf is null");
    }
    let data = (*image).0.data();
    if len < data.len() {
        return fail(DEBLUR_ERR_INVALID, "buffer too small");
    }
    ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    DEBLUR_OK
}

/// Release an image handle; null is a no-op.
///
/// # Safety
/// `image` must have come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn deblur_image_free(image: *mut DeblurImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Load a filter bank (.dfbk) from `path` into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_bank_load(
    path: *const c_char,
    out: *mut *mut DeblurBank,
) -> c_int {
    if out.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "out is null");
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match FilterBank::read(path) {
        Ok(bank) => {
            *out = Box::into_raw(Box::new(DeblurBank(bank)));
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_IO, &e.to_string()),
    }
}

/// Side length of the bank's filters; 0 for a null handle.
#[no_mangle]
pub extern "C" fn deblur_bank_patch_size(bank: *const DeblurBank) -> size_t {
    if bank.is_null() {
        return 0;
    }
    unsafe { (*bank).0.patch_size() }
}

/// Release a bank handle; null is a no-op.
///
/// # Safety
/// `bank` must have come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn deblur_bank_free(bank: *mut DeblurBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Restore `image` with `bank`, writing a new handle to `*out`.
///
/// # Safety
/// `image` and `bank` must be live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_restore(
    image: *const DeblurImage,
    bank: *const DeblurBank,
    out: *mut *mut DeblurImage,
) -> c_int {
    if image.is_null() || bank.is_null() || out.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "image, bank or out is null");
    }
    match restore(&(*image).0, &(*bank).0) {
        Ok(img) => {
            *out = Box::into_raw(Box::new(DeblurImage(img)));
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_INVALID, &e.to_string()),
    }
}

/// No-reference sharpness Q of `image` (default configuration), written to
/// `*out_q`.
///
/// # Safety
/// `image` must be a live handle; `out_q` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_metric_q(
    image: *const DeblurImage,
    out_q: *mut c_double,
) -> c_int {
    if image.is_null() || out_q.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "image or out_q is null");
    }
    match metric_q(&(*image).0, &QConfig::default()) {
        Ok(q) => {
            *out_q = q;
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_INVALID, &e.to_string()),
    }
}

/// Bounded sharpness index J = 1 / (1 + V); an infinite V maps to 0.
#[no_mangle]
pub extern "C" fn deblur_index_j(v: c_double) -> c_double {
    index_j(v)
}

/// PSNR of `test` against `reference` in dB (infinity for identical images),
/// written to `*out_db`.
///
/// # Safety
/// Both handles must be live; `out_db` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_psnr(
    reference: *const DeblurImage,
    test: *const DeblurImage,
    out_db: *mut c_double,
) -> c_int {
    if reference.is_null() || test.is_null() || out_db.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "reference, test or out_db is null");
    }
    match psnr(&(*reference).0, &(*test).0) {
        Ok(v) => {
            *out_db = v;
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_INVALID, &e.to_string()),
    }
}

/// Mean SSIM of `test` against `reference`, written to `*out_ssim`.
///
/// # Safety
/// Both handles must be live; `out_ssim` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_ssim(
    reference: *const DeblurImage,
    test: *const DeblurImage,
    out_ssim: *mut c_double,
) -> c_int {
    if reference.is_null() || test.is_null() || out_ssim.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "reference, test or out_ssim is null");
    }
    match ssim(&(*reference).0, &(*test).0) {
        Ok(v) => {
            *out_ssim = v;
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_INVALID, &e.to_string()),
    }
}

/// Sharpness-guided blend of `count` candidate images of the same scene
/// (default configuration); the blended image is written to `*out`.
///
/// # Safety
/// `candidates` must point to `count` live image handles; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deblur_blend(
    candidates: *const *const DeblurImage,
    count: size_t,
    out: *mut *mut DeblurImage,
) -> c_int {
    if candidates.is_null() || out.is_null() {
        return fail(DEBLUR_ERR_NULL_ARG, "candidates or out is null");
    }
    let handles = std::slice::from_raw_parts(candidates, count);
    let mut images = Vec::with_capacity(count);
    for h in handles {
        if h.is_null() {
            return fail(DEBLUR_ERR_NULL_ARG, "candidate is null");
        }
        images.push((**h).0.clone());
    }
    match blend(&images, &BlendConfig::default(), &QConfig::default()) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(DeblurImage(result.image)));
            DEBLUR_OK
        }
        Err(e) => fail(DEBLUR_ERR_INVALID, &e.to_string()),
    }
}
