//! C ABI over the `pacset` calibration library.
//!
//! Every function returns a [`PacsetStatus`] and writes results through out
//! pointers. On failure the message is available from
//! [`pacset_last_error_message`] on the same thread. Datasets and detector
//! thresholds are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pacset::detection::{calibrate_detector, ComponentBudgets, DetectorThresholds, ImageRecord, MatchRule};
use pacset::io::dump::{parse_dump_file, ParseMode};
use pacset::tracking::{calibrate_edges, frame_pairs};
use pacset::{binom_cdf, calibrate_threshold, iou, k_star, BoundingBox, CalibrationRecord, Error, RiskBudget};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacsetStatus {
    Ok = 0,
    NullArgument = 1,
    Domain = 2,
    Parse = 3,
    Integrity = 4,
    UnsupportedVersion = 5,
    Io = 6,
    InfeasibleBudget = 7,
    Panic = 8,
}

/// A parsed dump.
pub struct PacsetDataset {
    images: Vec<ImageRecord>,
}

/// Calibrated detector thresholds.
pub struct PacsetDetector {
    thresholds: DetectorThresholds,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PacsetStatus {
    match err {
        Error::Domain(_) => PacsetStatus::Domain,
        Error::Parse { .. } | Error::Json(_) | Error::Config(_) | Error::Csv(_) => PacsetStatus::Parse,
        Error::Integrity(_) => PacsetStatus::Integrity,
        Error::UnsupportedVersion(_) => PacsetStatus::UnsupportedVersion,
        Error::Io(_) => PacsetStatus::Io,
        Error::InfeasibleBudget(_) => PacsetStatus::InfeasibleBudget,
    }
}

struct Null;

enum Fail {
    Null,
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

impl From<Null> for Fail {
    fn from(_: Null) -> Self {
        Fail::Null
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PacsetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PacsetStatus::Ok
        }
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument".into());
            PacsetStatus::NullArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PacsetStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Null> {
    p.as_mut().ok_or(Null)
}

unsafe fn by_ref<'a, T>(p: *const T) -> Result<&'a T, Null> {
    p.as_ref().ok_or(Null)
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pacset_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `P[Binomial(n, p) <= k]`.
///
/// # Safety
/// `out_value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pacset_binom_cdf(k: u64, n: u64, p: f64, out_value: *mut f64) -> PacsetStatus {
    guard(|| {
        *out(out_value)? = binom_cdf(k, n, p)?;
        Ok(())
    })
}

/// Largest `k` with `F(k; n, epsilon) <= delta`. `*out_found` is 0 when no
/// such `k` exists, in which case `*out_k` is left untouched.
///
/// # Safety
/// Out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pacset_k_star(
    n: u64,
    epsilon: f64,
    delta: f64,
    out_k: *mut u64,
    out_found: *mut bool,
) -> PacsetStatus {
    guard(|| {
        let (k_out, found) = (out(out_k)?, out(out_found)?);
        match k_star(n, RiskBudget::new(epsilon, delta)?)? {
            Some(k) => {
                *k_out = k;
                *found = true;
            }
            None => *found = false,
        }
        Ok(())
    })
}

/// Calibrate a threshold on `len` true-label scores. `*out_feasible` is 0
/// when the budget is infeasible and `*out_tau` is 0.
///
/// # Safety
/// `scores` must point to `len` doubles; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pacset_calibrate_threshold(
    scores: *const f64,
    len: usize,
    epsilon: f64,
    delta: f64,
    out_tau: *mut f64,
    out_feasible: *mut bool,
) -> PacsetStatus {
    guard(|| {
        if scores.is_null() {
            return Err(Fail::Null);
        }
        let (tau_out, feasible) = (out(out_tau)?, out(out_feasible)?);
        let records = std::slice::from_raw_parts(scores, len)
            .iter()
            .map(|&s| CalibrationRecord::new(s))
            .collect::<Result<Vec<_>, _>>()?;
        let tau = calibrate_threshold(&records, RiskBudget::new(epsilon, delta)?)?;
        *tau_out = tau.tau;
        *feasible = !tau.is_infeasible();
        Ok(())
    })
}

/// IoU of two `[x_min, y_min, x_max, y_max]` boxes.
///
/// # Safety
/// `a` and `b` must point to four doubles each.
#[no_mangle]
pub unsafe extern "C" fn pacset_iou(a: *const f64, b: *const f64, out_value: *mut f64) -> PacsetStatus {
    guard(|| {
        if a.is_null() || b.is_null() {
            return Err(Fail::Null);
        }
        let load = |p: *const f64| -> Result<BoundingBox, Error> {
            let s = std::slice::from_raw_parts(p, 4);
            BoundingBox::new(s[0], s[1], s[2], s[3])
        };
        *out(out_value)? = iou(&load(a)?, &load(b)?);
        Ok(())
    })
}

/// Parse a dump file. Release the handle with [`pacset_dataset_free`].
///
/// # Safety
/// `path` must be a nul-terminated string; `out_dataset` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pacset_dataset_parse_file(
    path: *const c_char,
    lenient: bool,
    out_dataset: *mut *mut PacsetDataset,
) -> PacsetStatus {
    guard(|| {
        let slot = out(out_dataset)?;
        if path.is_null() {
            return Err(Fail::Null);
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| Error::Domain(format!("path is not utf-8: {e}")))?;
        let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
        let (images, _) = parse_dump_file(path, mode)?;
        *slot = Box::into_raw(Box::new(PacsetDataset { images }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`pacset_dataset_parse_file`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pacset_dataset_free(dataset: *mut PacsetDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pacset_dataset_num_images(
    dataset: *const PacsetDataset,
    out_count: *mut usize,
) -> PacsetStatus {
    guard(|| {
        *out(out_count)? = by_ref(dataset)?.images.len();
        Ok(())
    })
}

/// Calibrate detector thresholds on every ground-truth detection of the
/// dataset. Release the handle with [`pacset_detector_free`].
///
/// # Safety
/// `dataset` must be a live handle; `out_detector` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pacset_detector_calibrate(
    dataset: *const PacsetDataset,
    eps_prp: f64,
    delta_prp: f64,
    eps_prs: f64,
    delta_prs: f64,
    eps_loc: f64,
    delta_loc: f64,
    out_detector: *mut *mut PacsetDetector,
) -> PacsetStatus {
    guard(|| {
        let ds = by_ref(dataset)?;
        let slot = out(out_detector)?;
        let budgets = ComponentBudgets {
            prp: RiskBudget::new(eps_prp, delta_prp)?,
            prs: RiskBudget::new(eps_prs, delta_prs)?,
            loc: RiskBudget::new(eps_loc, delta_loc)?,
        };
        let thresholds = calibrate_detector(&ds.images, budgets, MatchRule::default())?;
        *slot = Box::into_raw(Box::new(PacsetDetector { thresholds }));
        Ok(())
    })
}

/// Proposal, presence and location thresholds.
///
/// # Safety
/// `detector` must be a live handle; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pacset_detector_thresholds(
    detector: *const PacsetDetector,
    out_tau_prp: *mut f64,
    out_tau_prs: *mut f64,
    out_tau_loc: *mut f64,
) -> PacsetStatus {
    guard(|| {
        let th = &by_ref(detector)?.thresholds;
        *out(out_tau_prp)? = th.tau_prp.tau;
        *out(out_tau_prs)? = th.tau_prs.tau;
        *out(out_tau_loc)? = th.tau_loc.tau;
        Ok(())
    })
}

/// # Safety
/// `detector` must come from [`pacset_detector_calibrate`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pacset_detector_free(detector: *mut PacsetDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Calibrate the edge threshold on the true transitions of the dataset.
///
/// # Safety
/// `dataset` must be a live handle; out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pacset_edges_calibrate(
    dataset: *const PacsetDataset,
    epsilon: f64,
    delta: f64,
    out_tau: *mut f64,
    out_feasible: *mut bool,
) -> PacsetStatus {
    guard(|| {
        let ds = by_ref(dataset)?;
        let (tau_out, feasible) = (out(out_tau)?, out(out_feasible)?);
        let th = calibrate_edges(&frame_pairs(&ds.images), RiskBudget::new(epsilon, delta)?)?;
        *tau_out = th.tau.tau;
        *feasible = !th.tau.is_infeasible();
        Ok(())
    })
}
