//! C interface to `levylan`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new` function and released by the matching `*_free`. Fallible calls
//! return a [`LevylanStatus`]; the message of the last failure on the
//! calling thread is available through [`levylan_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use levylan::densities::{density_alpha_t, density_limit, default_grid, grid_for, DensityTable, InversionOptions, NuisanceSpec};
use levylan::score_fisher::{fisher_matrix, IncrementModel};
use levylan::simulator::{sample_path, SamplingScheme, SmallJumps, ZMethod};
use levylan::{LevyError, LevyMeasureSpec, Taper, Theta};

/// Result codes of the fallible calls.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevylanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Budget = 4,
    Io = 5,
    Panic = 6,
    BufferTooSmall = 7,
}

/// Taper codes accepted by `levylan_spec_new`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevylanTaper {
    None = 0,
    ExpAbs = 1,
    Gauss = 2,
    SechLike = 3,
    SmoothDamp = 4,
}

/// A Lévy measure specification.
pub struct LevylanSpec(LevyMeasureSpec);

/// A tabulated density with its tail models.
pub struct LevylanDensity(DensityTable);

/// The law of one increment under a given parameter, with its score.
pub struct LevylanModel(IncrementModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LevyError) -> LevylanStatus {
    match e {
        LevyError::InvalidParameter { .. }
        | LevyError::Domain(_)
        | LevyError::Config(_)
        | LevyError::Mismatch(_)
        | LevyError::Horizon { .. } => LevylanStatus::InvalidArgument,
        LevyError::Budget(_) => LevylanStatus::Budget,
        LevyError::Io(_) | LevyError::Json(_) => LevylanStatus::Io,
        _ => LevylanStatus::Numerical,
    }
}

/// Runs `f`, recording failures and trapping panics.
fn guard<F: FnOnce() -> Result<(), LevylanStatus>>(f: F) -> LevylanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LevylanStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            LevylanStatus::Panic
        }
    }
}

fn fail(e: LevyError) -> LevylanStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> LevylanStatus {
    set_error(format!("null pointer: {what}"));
    LevylanStatus::NullPointer
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, LevylanStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message describing the last failure on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn levylan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a specification. `u1` is read only for the smooth-damp taper.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn levylan_spec_new(
    alpha: f64,
    c_plus: f64,
    c_minus: f64,
    taper: LevylanTaper,
    u1: f64,
    out: *mut *mut LevylanSpec,
) -> LevylanStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let taper = match taper {
            LevylanTaper::None => Taper::None,
            LevylanTaper::ExpAbs => Taper::ExpAbs,
            LevylanTaper::Gauss => Taper::Gauss,
            LevylanTaper::SechLike => Taper::SechLike,
            LevylanTaper::SmoothDamp => Taper::SmoothDamp { u1 },
        };
        let spec = LevyMeasureSpec::new(alpha, c_plus, c_minus, taper).map_err(fail)?;
        put(out, LevylanSpec(spec));
        Ok(())
    })
}

/// Parses a specification from the JSON form used by the CLI `model`
/// field.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn levylan_spec_from_json(json: *const c_char, out: *mut *mut LevylanSpec) -> LevylanStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return Err(null("json/out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| {
            set_error("spec JSON is not UTF-8".into());
            LevylanStatus::InvalidArgument
        })?;
        let spec: LevyMeasureSpec = serde_json::from_str(text).map_err(|e| fail(e.into()))?;
        put(out, LevylanSpec(spec));
        Ok(())
    })
}

/// # Safety
/// `spec` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn levylan_spec_free(spec: *mut LevylanSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Drift correction `c_t` of the spec.
///
/// # Safety
/// `spec` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn levylan_spec_drift(spec: *const LevylanSpec, t: f64, out: *mut f64) -> LevylanStatus {
    guard(|| {
        let spec = deref(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = spec.0.c_t(t).map_err(fail)?;
        Ok(())
    })
}

/// Tabulates the density of `t^{-1/α}(Z_t + c_t)`, or of its stable limit when
/// `t <= 0`, with default inversion settings.
///
/// # Safety
/// `spec` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn levylan_density_new(spec: *const LevylanSpec, t: f64, out: *mut *mut LevylanDensity) -> LevylanStatus {
    guard(|| {
        let spec = &deref(spec, "spec")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = InversionOptions::default();
        let table = if t <= 0.0 {
            density_limit(spec, &default_grid(spec.alpha).points(), &opts)
        } else {
            density_alpha_t(spec, t, &grid_for(spec, t).points(), &opts)
        }
        .map_err(fail)?;
        put(out, LevylanDensity(table));
        Ok(())
    })
}

/// # Safety
/// `density` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn levylan_density_free(density: *mut LevylanDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// Density value at `x`; NaN for a null handle.
///
/// # Safety
/// `density` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn levylan_density_value(density: *const LevylanDensity, x: f64) -> f64 {
    density.as_ref().map_or(f64::NAN, |d| d.0.value(x))
}

/// Derivative of the density at `x`; NaN for a null handle.
///
/// # Safety
/// `density` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn levylan_density_derivative(density: *const LevylanDensity, x: f64) -> f64 {
    density.as_ref().map_or(f64::NAN, |d| d.0.derivative(x))
}

/// Total mass of the table including its tails; NaN for a null handle.
///
/// # Safety
/// `density` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn levylan_density_mass(density: *const LevylanDensity) -> f64 {
    density.as_ref().map_or(f64::NAN, |d| d.0.total_mass())
}

/// Fisher information `Σ(θ)` of the stable limit, written row-major into
/// `out[0..4]`.
///
/// # Safety
/// `out` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn levylan_fisher(alpha: f64, c_plus: f64, c_minus: f64, gamma: f64, out: *mut f64) -> LevylanStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = fisher_matrix(alpha, c_plus, c_minus, gamma).map_err(fail)?.matrix();
        let out = std::slice::from_raw_parts_mut(out, 4);
        out.copy_from_slice(&[m[0][0], m[0][1], m[1][0], m[1][1]]);
        Ok(())
    })
}

/// Law of `X_t = βt + γZ_t` without nuisance.
///
/// # Safety
/// `spec` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn levylan_model_new(
    spec: *const LevylanSpec,
    beta: f64,
    gamma: f64,
    t: f64,
    out: *mut *mut LevylanModel,
) -> LevylanStatus {
    guard(|| {
        let spec = &deref(spec, "spec")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let theta = Theta::new(beta, gamma).map_err(fail)?;
        let m = IncrementModel::new(spec, &theta, &NuisanceSpec::Zero, t, &InversionOptions::default()).map_err(fail)?;
        put(out, LevylanModel(m));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn levylan_model_free(model: *mut LevylanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Log-density of one increment at `x`.
///
/// # Safety
/// `model` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn levylan_model_log_density(model: *const LevylanModel, x: f64, out: *mut f64) -> LevylanStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.log_density(x).map_err(fail)?;
        Ok(())
    })
}

/// Score `∂_θ ln p_t(θ; x)` written into `out[0..2]` as `(∂_β, ∂_γ)`.
///
/// # Safety
/// `model` must be valid and `out` must point to two writable doubles.
#[no_mangle]
pub unsafe extern "C" fn levylan_model_score(model: *const LevylanModel, x: f64, out: *mut f64) -> LevylanStatus {
    guard(|| {
        let m = &deref(model, "model")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = m.score(x).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, 2).copy_from_slice(&g);
        Ok(())
    })
}

/// Simulates `X` at `t_k = k h`, `k = 0..=n`, into `out[0..=n]`. Untapered
/// measures use exact stable increments; tapered ones use a jump ledger
/// with threshold `0.1 h^{1/α}` and a Gaussian small-jump part.
///
/// # Safety
/// `spec` must be valid and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn levylan_simulate(
    spec: *const LevylanSpec,
    beta: f64,
    gamma: f64,
    n: usize,
    h: f64,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> LevylanStatus {
    guard(|| {
        let spec = &deref(spec, "spec")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < n + 1 {
            set_error(format!("buffer holds {len} values, need {}", n + 1));
            return Err(LevylanStatus::BufferTooSmall);
        }
        let theta = Theta::new(beta, gamma).map_err(fail)?;
        let scheme = SamplingScheme::new(n, h).map_err(fail)?;
        let method = if spec.taper == Taper::None {
            ZMethod::Exact
        } else {
            ZMethod::Ledger {
                eps: 0.1 * h.powf(1.0 / spec.alpha),
                small: SmallJumps::Gaussian,
            }
        };
        let path = sample_path(spec, &theta, &NuisanceSpec::Zero, &scheme, method, seed, 0).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, n + 1).copy_from_slice(&path.x);
        Ok(())
    })
}
