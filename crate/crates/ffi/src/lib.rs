//! C ABI over the contact-thermo kernels.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a [`CtStatus`];
//! on failure the message is available from [`ct_last_error_message`] on
//! the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use contact_thermo::entropy;
use contact_thermo::error::Error;
use contact_thermo::expr;
use contact_thermo::fields::ObservableSystem;
use contact_thermo::geometry::{self, ContactForm, ContactModel};
use contact_thermo::maxent::MaxEntProblem;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownModel = 3,
    UnknownExpression = 4,
    Degenerate = 5,
    NotAttainable = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// A catalog contact manifold.
pub struct CtModel {
    inner: Arc<ContactModel>,
}

/// A contact form on a [`CtModel`].
pub struct CtForm {
    inner: ContactForm,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CtStatus {
    match e {
        Error::UnknownModel(_) => CtStatus::UnknownModel,
        Error::UnknownExpression(_) => CtStatus::UnknownExpression,
        Error::SingularForm { .. } | Error::Degenerate { .. } | Error::NonPositiveMass(_) => CtStatus::Degenerate,
        Error::NotAttainable(_) => CtStatus::NotAttainable,
        Error::InvalidInput(_) | Error::ConfigInvalid(_) => CtStatus::InvalidArgument,
        _ => CtStatus::Numerical,
    }
}

struct Fail(CtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            CtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(CtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn as_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn grid_of(form: &ContactForm, resolution: usize) -> Result<contact_thermo::fields::Grid, Fail> {
    if resolution < 2 {
        return Err(Fail(CtStatus::InvalidArgument, format!("resolution {resolution} is below 2")));
    }
    Ok(form.model().grid(resolution)?)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ct_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a catalog model (`"torus3"` or `"torus_2n1"` with `n`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_model_new(name: *const c_char, n: usize, out: *mut *mut CtModel) -> CtStatus {
    guard(|| {
        let name = as_str(name, "name")?;
        let m = ContactModel::catalog(name, n)?;
        let h = Box::into_raw(Box::new(CtModel { inner: Arc::new(m) }));
        write(out, h, "out")
    })
}

/// # Safety
/// `model` must come from [`ct_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_model_free(model: *mut CtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Manifold dimension `2n+1`, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_model_dim(model: *const CtModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// The catalog base form of `model`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_form_base(model: *const CtModel, out: *mut *mut CtForm) -> CtStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let h = Box::into_raw(Box::new(CtForm { inner: ContactForm::base(&m.inner) }));
        write(out, h, "out")
    })
}

/// The base form multiplied by a positive function given as an expression
/// over the model's axis names, for example `"exp(0.3*cos2pix)"`.
///
/// # Safety
/// `model` must be a live handle, `scale` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_form_scaled(
    model: *const CtModel,
    scale: *const c_char,
    out: *mut *mut CtForm,
) -> CtStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let f = expr::parse(as_str(scale, "scale")?, m.inner.axis_names())?;
        let h = Box::into_raw(Box::new(CtForm { inner: ContactForm::scaled(&m.inner, f) }));
        write(out, h, "out")
    })
}

/// # Safety
/// `form` must come from a `ct_form_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_form_free(form: *mut CtForm) {
    if !form.is_null() {
        drop(Box::from_raw(form));
    }
}

/// Total volume of the form on a `resolution^d` grid.
///
/// # Safety
/// `form` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_form_mass(form: *const CtForm, resolution: usize, out: *mut f64) -> CtStatus {
    guard(|| {
        let f = &as_ref(form, "form")?.inner;
        let v = entropy::mass(f, &grid_of(f, resolution)?)?;
        write(out, v, "out")
    })
}

/// Volume density of the form at a point of length `dim`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_form_density(form: *const CtForm, x: *const f64, len: usize, out: *mut f64) -> CtStatus {
    guard(|| {
        let f = &as_ref(form, "form")?.inner;
        let x = point(f, x, len)?;
        write(out, f.density(x)?, "out")
    })
}

unsafe fn point<'a>(f: &ContactForm, x: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len != f.dim() {
        return Err(Fail(CtStatus::InvalidArgument, format!("point has length {len}, expected {}", f.dim())));
    }
    as_slice(x, len, "x")
}

/// Reeb vector at `x`. Writes `dim` doubles to `out` (capacity `out_len`)
/// and the defining-equation residual to `residual` when it is non-NULL.
///
/// # Safety
/// `x` must point to `len` doubles, `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ct_form_reeb(
    form: *const CtForm,
    x: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
    residual: *mut f64,
) -> CtStatus {
    guard(|| {
        let f = &as_ref(form, "form")?.inner;
        let x = point(f, x, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < f.dim() {
            return Err(Fail(CtStatus::BufferTooSmall, format!("out holds {out_len} values, need {}", f.dim())));
        }
        let (r, res) = geometry::reeb_field_with_residual(f, x)?;
        std::slice::from_raw_parts_mut(out, r.len()).copy_from_slice(&r);
        if !residual.is_null() {
            residual.write(res);
        }
        Ok(())
    })
}

/// Relative entropy of `form` with respect to `reference`.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_relative_entropy(
    form: *const CtForm,
    reference: *const CtForm,
    resolution: usize,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        let a = &as_ref(form, "form")?.inner;
        let b = &as_ref(reference, "reference")?.inner;
        let v = entropy::relative_entropy(a, b, &grid_of(b, resolution)?)?;
        write(out, v, "out")
    })
}

/// Maximum-entropy equilibrium relative to the volume-normalized `reference`.
/// `observables` is a comma-separated expression list with `k` entries and
/// `targets` holds `k` values. Writes the `k` multipliers to `p_out`, the
/// log-partition value to `w_out` and the entropy to `entropy_out`; the
/// scalar outputs may be NULL.
///
/// # Safety
/// `targets` must point to `k` doubles and `p_out` to `k` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ct_maxent_solve(
    reference: *const CtForm,
    observables: *const c_char,
    targets: *const f64,
    k: usize,
    resolution: usize,
    p_out: *mut f64,
    w_out: *mut f64,
    entropy_out: *mut f64,
) -> CtStatus {
    guard(|| {
        let lam = &as_ref(reference, "reference")?.inner;
        let obs = expr::parse_list(as_str(observables, "observables")?, lam.model().axis_names())?;
        if obs.len() != k {
            return Err(Fail(CtStatus::InvalidArgument, format!("{} observables but k = {k}", obs.len())));
        }
        let targets = as_slice(targets, k, "targets")?;
        if p_out.is_null() {
            return Err(null("p_out"));
        }
        let grid = grid_of(lam, resolution)?;
        let (lam0, _) = entropy::normalize(lam, &grid)?;
        let prob = MaxEntProblem::new(&lam0, &ObservableSystem::new(obs)?, &grid)?;
        let sol = prob.solve_for(targets)?;
        std::slice::from_raw_parts_mut(p_out, k).copy_from_slice(&sol.p);
        if !w_out.is_null() {
            w_out.write(sol.w);
        }
        if !entropy_out.is_null() {
            entropy_out.write(sol.entropy);
        }
        Ok(())
    })
}
