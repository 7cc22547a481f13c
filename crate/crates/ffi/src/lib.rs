//! C interface to `polysketch`.
//!
//! Every fallible function returns a [`PskStatus`]. On failure a message is
//! available from [`psk_last_error_message`] on the calling thread. Objects
//! are opaque handles created by `*_new`/`*_sample`/`*_read` style
//! constructors and released with the matching `*_free`. Matrices are `f64`,
//! row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use polysketch::learnable::LearnableSketchParams;
use polysketch::sketch::FeatureMap;
use polysketch::{attention, causal, io, learnable, sketch, Error, Matrix, SketchTree};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    NonFinite = 4,
    Precondition = 5,
    CapExceeded = 6,
    Format = 7,
    Io = 8,
    Panic = 9,
}

/// Dense `f64` matrix.
pub struct PskMatrix(Matrix<f64>);

/// Sampled Gaussian sketch tree.
pub struct PskSketchTree(SketchTree);

/// Learnable sketch parameters.
pub struct PskLearnable(LearnableSketchParams);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PskStatus {
    match e {
        Error::Shape { .. } => PskStatus::ShapeMismatch,
        Error::InvalidArgument(_) => PskStatus::InvalidArgument,
        Error::NonFinite { .. } => PskStatus::NonFinite,
        Error::Precondition(_) => PskStatus::Precondition,
        Error::CapExceeded { .. } => PskStatus::CapExceeded,
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) => PskStatus::Format,
        Error::Io(_) => PskStatus::Io,
    }
}

struct Fail(PskStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PskStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PskStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PskStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PskStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(PskStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn psk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn psk_status_string(status: PskStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PskStatus::Ok => c"ok",
        PskStatus::NullPointer => c"null pointer",
        PskStatus::InvalidArgument => c"invalid argument",
        PskStatus::ShapeMismatch => c"shape mismatch",
        PskStatus::NonFinite => c"non-finite value",
        PskStatus::Precondition => c"precondition violated",
        PskStatus::CapExceeded => c"size cap exceeded",
        PskStatus::Format => c"malformed input",
        PskStatus::Io => c"i/o error",
        PskStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn psk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles (may be null when
/// empty); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let len =
            rows.checked_mul(cols).ok_or_else(|| Fail(PskStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let values = if len == 0 {
            Vec::new()
        } else if data.is_null() {
            return Err(null("data"));
        } else {
            std::slice::from_raw_parts(data, len).to_vec()
        };
        emit(out, PskMatrix(Matrix::new(rows, cols, values)?))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_zeros(rows: usize, cols: usize, out: *mut *mut PskMatrix) -> PskStatus {
    guard(|| {
        rows.checked_mul(cols).ok_or_else(|| Fail(PskStatus::InvalidArgument, "rows * cols overflows".into()))?;
        emit(out, PskMatrix(Matrix::zeros(rows, cols)))
    })
}

/// # Safety
/// `m` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_free(m: *mut PskMatrix) {
    free(m)
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_rows(m: *const PskMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_cols(m: *const PskMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the row-major values into `buf`, which must hold exactly
/// `rows * cols` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_copy_data(m: *const PskMatrix, buf: *mut f64, len: usize) -> PskStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let data = m.0.as_slice();
        if len != data.len() {
            return Err(Fail(
                PskStatus::ShapeMismatch,
                format!("buffer holds {len} values, matrix has {}", data.len()),
            ));
        }
        if len > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            std::slice::from_raw_parts_mut(buf, len).copy_from_slice(data);
        }
        Ok(())
    })
}

/// Reads a PSKM file; single-precision files are widened to `f64`.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_read_pskm(path: *const c_char, out: *mut *mut PskMatrix) -> PskStatus {
    guard(|| {
        let m = io::read_pskm(path_arg(path)?)?.to_f64();
        emit(out, PskMatrix(m))
    })
}

/// Writes a PSKM file. `dtype` is 0 for `f32` storage, 1 for `f64`.
///
/// # Safety
/// `m` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn psk_matrix_write_pskm(m: *const PskMatrix, path: *const c_char, dtype: u8) -> PskStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let path = path_arg(path)?;
        match dtype {
            0 => io::write_pskm(path, &m.0.cast::<f32>())?,
            1 => io::write_pskm(path, &m.0)?,
            other => return Err(Fail(PskStatus::InvalidArgument, format!("unknown dtype {other}"))),
        }
        Ok(())
    })
}

/// Samples the Gaussian sketch for the degree-`p` non-negative map.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psk_sketch_sample(
    h: usize,
    r: usize,
    p: u32,
    seed: u64,
    out: *mut *mut PskSketchTree,
) -> PskStatus {
    guard(|| emit(out, PskSketchTree(sketch::sample_sketch(h, r, p, seed)?)))
}

/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psk_sketch_free(t: *mut PskSketchTree) {
    free(t)
}

/// Width of the non-negative features, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psk_sketch_feature_dim(t: *const PskSketchTree) -> usize {
    t.as_ref().map_or(0, |t| t.0.feature_dim())
}

/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_sketch_apply_with_negativity(
    t: *const PskSketchTree,
    a: *const PskMatrix,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (t, a) = (deref(t, "tree")?, deref(a, "matrix")?);
        emit(out, PskMatrix(sketch::apply_with_negativity(&a.0, &t.0)?))
    })
}

/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_sketch_apply_non_negative(
    t: *const PskSketchTree,
    a: *const PskMatrix,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (t, a) = (deref(t, "tree")?, deref(a, "matrix")?);
        emit(out, PskMatrix(sketch::apply_non_negative(&a.0, &t.0)?))
    })
}

/// Relative AMM error of the tree's feature map on `q`, `k`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_amm_relative_error(
    q: *const PskMatrix,
    k: *const PskMatrix,
    t: *const PskSketchTree,
    p: u32,
    out: *mut f64,
) -> PskStatus {
    guard(|| {
        let (q, k, t) = (deref(q, "q")?, deref(k, "k")?, deref(t, "tree")?);
        let e = sketch::amm_relative_error(&q.0, &k.0, &t.0, p)?;
        *out.as_mut().ok_or_else(|| null("out"))? = e;
        Ok(())
    })
}

/// Randomly initialized learnable sketch (`p` in {4, 8, 16}).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psk_learnable_init(
    h: usize,
    r: usize,
    p: u32,
    seed: u64,
    out: *mut *mut PskLearnable,
) -> PskStatus {
    guard(|| emit(out, PskLearnable(learnable::init_params(h, r, p, seed)?)))
}

/// # Safety
/// `path` must be a nul-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_learnable_load(path: *const c_char, out: *mut *mut PskLearnable) -> PskStatus {
    guard(|| emit(out, PskLearnable(learnable::load_params(path_arg(path)?)?)))
}

/// # Safety
/// `params` must be live; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn psk_learnable_save(params: *const PskLearnable, path: *const c_char) -> PskStatus {
    guard(|| {
        let params = deref(params, "params")?;
        learnable::save_params(path_arg(path)?, &params.0)?;
        Ok(())
    })
}

/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn psk_learnable_free(params: *mut PskLearnable) {
    free(params)
}

/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_learnable_apply_with_negativity(
    params: *const PskLearnable,
    a: *const PskMatrix,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (params, a) = (deref(params, "params")?, deref(a, "matrix")?);
        emit(out, PskMatrix(learnable::apply_learnable_with_negativity(&a.0, &params.0)?))
    })
}

/// Exact degree-`p` polynomial attention with the `1 +` denominator.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_exact_poly_attention(
    q: *const PskMatrix,
    k: *const PskMatrix,
    v: *const PskMatrix,
    p: u32,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (q, k, v) = (deref(q, "q")?, deref(k, "k")?, deref(v, "v")?);
        emit(out, PskMatrix(attention::exact_poly_attention(&q.0, &k.0, &v.0, p)?))
    })
}

/// Non-causal sketched attention in linear time.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_polysketch_attention(
    q: *const PskMatrix,
    k: *const PskMatrix,
    v: *const PskMatrix,
    t: *const PskSketchTree,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (q, k, v, t) = (deref(q, "q")?, deref(k, "k")?, deref(v, "v")?, deref(t, "tree")?);
        emit(out, PskMatrix(attention::polysketch_attention(&q.0, &k.0, &v.0, &t.0)?))
    })
}

/// `lt(A·Bᵀ)·C` with block size `block`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_lt_multiply_blocked(
    a: *const PskMatrix,
    b: *const PskMatrix,
    c: *const PskMatrix,
    block: usize,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (a, b, c) = (deref(a, "a")?, deref(b, "b")?, deref(c, "c")?);
        emit(out, PskMatrix(causal::lt_multiply_blocked(&a.0, &b.0, &c.0, block)?))
    })
}

/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_causal_exact_poly_attention(
    q: *const PskMatrix,
    k: *const PskMatrix,
    v: *const PskMatrix,
    p: u32,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| {
        let (q, k, v) = (deref(q, "q")?, deref(k, "k")?, deref(v, "v")?);
        emit(out, PskMatrix(causal::causal_exact_poly_attention(&q.0, &k.0, &v.0, p)?))
    })
}

unsafe fn causal_with<F: FeatureMap>(
    q: *const PskMatrix,
    k: *const PskMatrix,
    v: *const PskMatrix,
    fmap: &F,
    block: usize,
    local_exact: bool,
    out: *mut *mut PskMatrix,
) -> Result<(), Fail> {
    let (q, k, v) = (deref(q, "q")?, deref(k, "k")?, deref(v, "v")?);
    let m = causal::causal_polysketch_attention(&q.0, &k.0, &v.0, fmap, block, local_exact)?;
    emit(out, PskMatrix(m))
}

/// Linear-time causal sketched attention with a Gaussian sketch.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_causal_polysketch_attention(
    q: *const PskMatrix,
    k: *const PskMatrix,
    v: *const PskMatrix,
    t: *const PskSketchTree,
    block: usize,
    local_exact: bool,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| causal_with(q, k, v, &deref(t, "tree")?.0, block, local_exact, out))
}

/// Linear-time causal sketched attention with learnable features.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psk_causal_learnable_attention(
    q: *const PskMatrix,
    k: *const PskMatrix,
    v: *const PskMatrix,
    params: *const PskLearnable,
    block: usize,
    local_exact: bool,
    out: *mut *mut PskMatrix,
) -> PskStatus {
    guard(|| causal_with(q, k, v, &deref(params, "params")?.0, block, local_exact, out))
}
