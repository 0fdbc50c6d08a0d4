//! C ABI for doaflow.
//!
//! Every fallible call returns a [`DoaStatus`]; on anything but
//! `DOA_STATUS_OK` the thread's last error message describes the failure.
//! Objects cross the boundary as opaque handles and are released with their
//! matching `_free`. Strings handed out are owned by the caller and must be
//! released with [`doa_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use doaflow::apps::{AppName, AppVersion, Paradigm, Stage};
use doaflow::metrics::{self, ComponentManifest};
use doaflow::sim::{run_scenario, RunReport, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    UnknownName = 3,
    RuntimeFailure = 4,
    Panic = 5,
}

/// Component inventory of one app version.
pub struct DoaManifest(ComponentManifest);

/// Report of one simulated run.
pub struct DoaReport(RunReport);

struct Failure(DoaStatus, String);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DoaStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            DoaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DoaStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DoaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn parse<T: std::str::FromStr<Err = String>>(p: *const c_char, what: &str) -> Result<T, Failure> {
    text(p, what)?
        .parse()
        .map_err(|e| Failure(DoaStatus::UnknownName, e))
}

unsafe fn version(app: *const c_char, paradigm: *const c_char, stage: *const c_char) -> Result<AppVersion, Failure> {
    Ok(AppVersion::new(
        parse(app, "app")?,
        parse(paradigm, "paradigm")?,
        parse(stage, "stage")?,
    ))
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes replaced").into_raw()
}

/// Checks an out-parameter before any value for it is allocated.
fn writable<T>(slot: *mut T, what: &str) -> Result<(), Failure> {
    if slot.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn doa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn doa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn doa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds the component manifest of `app`/`paradigm`/`stage`
/// (for example `"ride_allocation"`, `"fbp"`, `"min"`).
///
/// # Safety
/// String arguments must be NUL-terminated; `out_manifest` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_manifest_new(
    app: *const c_char,
    paradigm: *const c_char,
    stage: *const c_char,
    out_manifest: *mut *mut DoaManifest,
) -> DoaStatus {
    guard(|| {
        let v = version(app, paradigm, stage)?;
        writable(out_manifest, "out_manifest")?;
        out_manifest.write(Box::into_raw(Box::new(DoaManifest(metrics::manifest(v)))));
        Ok(())
    })
}

/// Number of components, 0 for NULL.
///
/// # Safety
/// `manifest` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn doa_manifest_len(manifest: *const DoaManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.0.len())
}

/// # Safety
/// `manifest` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn doa_manifest_free(manifest: *mut DoaManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Affected-components count going from `from` to `to`.
///
/// # Safety
/// Both handles must be live; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_manifest_diff_count(
    from: *const DoaManifest,
    to: *const DoaManifest,
    out_count: *mut usize,
) -> DoaStatus {
    guard(|| {
        let d = metrics::diff(&handle(from, "from")?.0, &handle(to, "to")?.0);
        writable(out_count, "out_count")?;
        out_count.write(d.affected_count);
        Ok(())
    })
}

/// The diff as a sorted `status id` table ending in `affected_count N`.
/// Free the result with `doa_string_free`.
///
/// # Safety
/// Both handles must be live; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_manifest_diff_table(
    from: *const DoaManifest,
    to: *const DoaManifest,
    out_text: *mut *mut c_char,
) -> DoaStatus {
    guard(|| {
        let d = metrics::diff(&handle(from, "from")?.0, &handle(to, "to")?.0);
        writable(out_text, "out_text")?;
        out_text.write(owned(d.table()));
        Ok(())
    })
}

/// Simulates one app version for `ticks` ticks from `seed`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_run(
    app: *const c_char,
    paradigm: *const c_char,
    stage: *const c_char,
    ticks: u64,
    seed: u64,
    out_report: *mut *mut DoaReport,
) -> DoaStatus {
    guard(|| {
        let v = version(app, paradigm, stage)?;
        writable(out_report, "out_report")?;
        let report = run_scenario(&Scenario::new(v.app, seed, ticks), v)
            .map_err(|e| Failure(DoaStatus::RuntimeFailure, e.to_string()))?;
        out_report.write(Box::into_raw(Box::new(DoaReport(report))));
        Ok(())
    })
}

/// Hex sha256 over the run's observed outputs. Free with `doa_string_free`.
///
/// # Safety
/// `report` must be live; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_report_digest(report: *const DoaReport, out_text: *mut *mut c_char) -> DoaStatus {
    guard(|| {
        let r = handle(report, "report")?;
        writable(out_text, "out_text")?;
        out_text.write(owned(r.0.digest.clone()));
        Ok(())
    })
}

/// Canonical JSON of the report. Free with `doa_string_free`.
///
/// # Safety
/// `report` must be live; `out_text` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_report_json(report: *const DoaReport, out_text: *mut *mut c_char) -> DoaStatus {
    guard(|| {
        let r = handle(report, "report")?;
        writable(out_text, "out_text")?;
        out_text.write(owned(r.0.to_json()));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn doa_report_free(report: *mut DoaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Runs both min-stage paradigms of `app` and stores whether their output
/// digests match.
///
/// # Safety
/// `app` must be NUL-terminated; `out_match` must be writable.
#[no_mangle]
pub unsafe extern "C" fn doa_equiv(app: *const c_char, ticks: u64, seed: u64, out_match: *mut bool) -> DoaStatus {
    guard(|| {
        let app: AppName = parse(app, "app")?;
        writable(out_match, "out_match")?;
        let scenario = Scenario::new(app, seed, ticks);
        let digest = |p| {
            run_scenario(&scenario, AppVersion::new(app, p, Stage::Min))
                .map(|r| r.digest)
                .map_err(|e| Failure(DoaStatus::RuntimeFailure, e.to_string()))
        };
        let same = digest(Paradigm::Fbp)? == digest(Paradigm::Soa)?;
        out_match.write(same);
        Ok(())
    })
}
