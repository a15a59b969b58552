//! C ABI for chaoskit.
//!
//! Every fallible function returns a [`CkStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and can
//! be fetched with [`ck_last_error_message`]. Handles are opaque and must be
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use chaoskit::bounds::{fm_gamma_rhs, fm_kol_rhs, fm_w1_rhs, fm_w1_rhs_simple, Rhs};
use chaoskit::malliavin::{add_one_cost, apply_l, gamma0, remove_one_cost};
use chaoskit::oracle::exact_moment;
use chaoskit::stein::{ks_distance, w1_distance, Sample, Target};
use chaoskit::{sample_poisson, ChaosFunctional, DiscreteSpace, Error, PointConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    /// Input rejected by the library; see the last error message.
    Library = 4,
    TooLarge = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkTarget {
    Normal = 0,
    /// Centered Gamma with parameter `nu`.
    CenteredGamma = 1,
}

/// Opaque cell space.
pub struct CkSpace(DiscreteSpace);

/// Opaque chaos functional bound to the space it was built on.
pub struct CkFunctional(ChaosFunctional);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: CkStatus, msg: impl Into<String>) -> CkStatus {
    set_error(msg);
    status
}

fn from_lib(e: Error) -> CkStatus {
    let status = match e {
        Error::InstanceTooLarge(_) => CkStatus::TooLarge,
        _ => CkStatus::Library,
    };
    fail(status, e.to_string())
}

fn guard<F: FnOnce() -> CkStatus>(f: F) -> CkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == CkStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CkStatus::Panic, msg)
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(CkStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

unsafe fn config_of(space: &DiscreteSpace, counts: *const u32, len: usize) -> Result<PointConfig, CkStatus> {
    if counts.is_null() && len > 0 {
        return Err(fail(CkStatus::NullPointer, "`counts` is null"));
    }
    if len != space.n_cells() {
        return Err(fail(
            CkStatus::InvalidArgument,
            format!("expected {} counts, got {len}", space.n_cells()),
        ));
    }
    let c = if len == 0 { &[][..] } else { slice::from_raw_parts(counts, len) };
    Ok(PointConfig::new(c.to_vec()))
}

fn write_rhs(r: Rhs, out: *mut f64, noise: *mut bool) {
    // SAFETY: callers checked `out`; `noise` may be null.
    unsafe {
        *out = r.value;
        if !noise.is_null() {
            *noise = r.noise;
        }
    }
}

fn target_of(kind: CkTarget, nu: f64) -> Result<Target, CkStatus> {
    match kind {
        CkTarget::Normal => Ok(Target::Normal),
        CkTarget::CenteredGamma => Target::centered_gamma(nu).map_err(from_lib),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ck_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error message on this thread, or NULL if the last call
/// succeeded. Free with [`ck_string_free`].
#[no_mangle]
pub extern "C" fn ck_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ck_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `masses` must point to `n_cells` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_space_new(masses: *const f64, n_cells: usize, out: *mut *mut CkSpace) -> CkStatus {
    guard(|| {
        non_null!(masses, out);
        let m = slice::from_raw_parts(masses, n_cells).to_vec();
        match DiscreteSpace::new(m) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(CkSpace(s)));
                CkStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}

/// # Safety
/// `space` must be NULL or a live handle from [`ck_space_new`].
#[no_mangle]
pub unsafe extern "C" fn ck_space_free(space: *mut CkSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of cells, or 0 for a NULL handle.
///
/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ck_space_n_cells(space: *const CkSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.n_cells())
}

/// Draw one Poisson configuration into `counts_out[0..len]`.
///
/// # Safety
/// `space` must be live; `counts_out` must hold `len` writable u32.
#[no_mangle]
pub unsafe extern "C" fn ck_sample_poisson(
    space: *const CkSpace,
    seed: u64,
    counts_out: *mut u32,
    len: usize,
) -> CkStatus {
    guard(|| {
        non_null!(space, counts_out);
        let s = &(*space).0;
        if len != s.n_cells() {
            return fail(CkStatus::InvalidArgument, format!("expected {} counts, got {len}", s.n_cells()));
        }
        let c = sample_poisson(s, seed);
        slice::from_raw_parts_mut(counts_out, len).copy_from_slice(c.counts());
        CkStatus::Ok
    })
}

/// Parse `{"constant": c, "kernels": {"p": {...}}}` on `space`.
///
/// # Safety
/// `space` must be live, `json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_functional_from_json(
    space: *const CkSpace,
    json: *const c_char,
    out: *mut *mut CkFunctional,
) -> CkStatus {
    guard(|| {
        non_null!(space, json, out);
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(CkStatus::InvalidUtf8, "json is not valid UTF-8");
        };
        match ChaosFunctional::from_json(text, &(*space).0) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(CkFunctional(f)));
                CkStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}

/// # Safety
/// `f` must be NULL or a live handle from [`ck_functional_from_json`].
#[no_mangle]
pub unsafe extern "C" fn ck_functional_free(f: *mut CkFunctional) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// F(χ) for the configuration `counts[0..len]`.
///
/// # Safety
/// `f` live, `counts` readable for `len`, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_functional_evaluate(
    f: *const CkFunctional,
    counts: *const u32,
    len: usize,
    out: *mut f64,
) -> CkStatus {
    guard(|| {
        non_null!(f, out);
        let f = &(*f).0;
        let c = match config_of(f.space(), counts, len) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match f.evaluate(&c) {
            Ok(v) => {
                *out = v;
                CkStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}

/// D⁺_cell F(χ).
///
/// # Safety
/// As for [`ck_functional_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn ck_add_one_cost(
    f: *const CkFunctional,
    counts: *const u32,
    len: usize,
    cell: usize,
    out: *mut f64,
) -> CkStatus {
    guard(|| {
        non_null!(f, out);
        let f = &(*f).0;
        let c = match config_of(f.space(), counts, len) {
            Ok(c) => c,
            Err(s) => return s,
        };
        if let Err(e) = f.space().check_cell(cell) {
            return from_lib(e);
        }
        *out = add_one_cost(f, &c, cell);
        CkStatus::Ok
    })
}

/// D⁻_cell F(χ); zero when the cell is empty.
///
/// # Safety
/// As for [`ck_functional_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn ck_remove_one_cost(
    f: *const CkFunctional,
    counts: *const u32,
    len: usize,
    cell: usize,
    out: *mut f64,
) -> CkStatus {
    guard(|| {
        non_null!(f, out);
        let f = &(*f).0;
        let c = match config_of(f.space(), counts, len) {
            Ok(c) => c,
            Err(s) => return s,
        };
        if let Err(e) = f.space().check_cell(cell) {
            return from_lib(e);
        }
        *out = remove_one_cost(f, &c, cell);
        CkStatus::Ok
    })
}

/// Pathwise LF(χ).
///
/// # Safety
/// As for [`ck_functional_evaluate`].
#[no_mangle]
pub unsafe extern "C" fn ck_apply_l(f: *const CkFunctional, counts: *const u32, len: usize, out: *mut f64) -> CkStatus {
    guard(|| {
        non_null!(f, out);
        let f = &(*f).0;
        let c = match config_of(f.space(), counts, len) {
            Ok(c) => c,
            Err(s) => return s,
        };
        *out = apply_l(f, f.space(), &c);
        CkStatus::Ok
    })
}

/// Γ₀(F, G)(χ). Both functionals must live on equal spaces.
///
/// # Safety
/// `f`, `g` live; `counts` readable for `len`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_gamma0(
    f: *const CkFunctional,
    g: *const CkFunctional,
    counts: *const u32,
    len: usize,
    out: *mut f64,
) -> CkStatus {
    guard(|| {
        non_null!(f, g, out);
        let (f, g) = (&(*f).0, &(*g).0);
        if f.space() != g.space() {
            return fail(CkStatus::InvalidArgument, "functionals live on different spaces");
        }
        let c = match config_of(f.space(), counts, len) {
            Ok(c) => c,
            Err(s) => return s,
        };
        *out = gamma0(f, g, f.space(), &c);
        CkStatus::Ok
    })
}

/// E[F^k] by exact polynomial expectation.
///
/// # Safety
/// `f` live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_exact_moment(f: *const CkFunctional, k: u32, out: *mut f64) -> CkStatus {
    guard(|| {
        non_null!(f, out);
        match exact_moment(&(*f).0, k) {
            Ok(v) => {
                *out = v;
                CkStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}

unsafe fn distance(
    values: *const f64,
    n: usize,
    kind: CkTarget,
    nu: f64,
    out: *mut f64,
    d: fn(&Sample, &Target) -> f64,
) -> CkStatus {
    non_null!(values, out);
    let target = match target_of(kind, nu) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match Sample::new(slice::from_raw_parts(values, n).to_vec()) {
        Ok(s) => {
            *out = d(&s, &target);
            CkStatus::Ok
        }
        Err(e) => from_lib(e),
    }
}

/// W₁ between the empirical law of `values[0..n]` and the target.
/// `nu` is ignored for the normal target.
///
/// # Safety
/// `values` readable for `n`, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_w1_distance(
    values: *const f64,
    n: usize,
    target: CkTarget,
    nu: f64,
    out: *mut f64,
) -> CkStatus {
    guard(|| distance(values, n, target, nu, out, w1_distance))
}

/// Kolmogorov distance between the empirical law and the target.
///
/// # Safety
/// As for [`ck_w1_distance`].
#[no_mangle]
pub unsafe extern "C" fn ck_ks_distance(
    values: *const f64,
    n: usize,
    target: CkTarget,
    nu: f64,
    out: *mut f64,
) -> CkStatus {
    guard(|| distance(values, n, target, nu, out, ks_distance))
}

/// Order-dependent Wasserstein fourth-moment bound. `noise` may be NULL.
///
/// # Safety
/// `out` writable; `noise` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ck_fm_w1_rhs(q: usize, m4: f64, out: *mut f64, noise: *mut bool) -> CkStatus {
    guard(|| {
        non_null!(out);
        match fm_w1_rhs(q, m4) {
            Ok(r) => {
                write_rhs(r, out, noise);
                CkStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}

/// (√(2/π) + 2)·√(m4 − 3).
///
/// # Safety
/// As for [`ck_fm_w1_rhs`].
#[no_mangle]
pub unsafe extern "C" fn ck_fm_w1_rhs_simple(m4: f64, out: *mut f64, noise: *mut bool) -> CkStatus {
    guard(|| {
        non_null!(out);
        write_rhs(fm_w1_rhs_simple(m4), out, noise);
        CkStatus::Ok
    })
}

/// Kolmogorov fourth-moment bound.
///
/// # Safety
/// As for [`ck_fm_w1_rhs`].
#[no_mangle]
pub unsafe extern "C" fn ck_fm_kol_rhs(m4: f64, out: *mut f64, noise: *mut bool) -> CkStatus {
    guard(|| {
        non_null!(out);
        write_rhs(fm_kol_rhs(m4), out, noise);
        CkStatus::Ok
    })
}

/// Centered Gamma fourth-moment bound.
///
/// # Safety
/// As for [`ck_fm_w1_rhs`].
#[no_mangle]
pub unsafe extern "C" fn ck_fm_gamma_rhs(
    nu: f64,
    q: usize,
    m3: f64,
    m4: f64,
    d4term: f64,
    out: *mut f64,
    noise: *mut bool,
) -> CkStatus {
    guard(|| {
        non_null!(out);
        match fm_gamma_rhs(nu, q, m3, m4, d4term) {
            Ok(r) => {
                write_rhs(r, out, noise);
                CkStatus::Ok
            }
            Err(e) => from_lib(e),
        }
    })
}
