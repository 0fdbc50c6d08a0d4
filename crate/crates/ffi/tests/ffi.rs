use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use doaflow_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = doa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    doa_string_free(p);
    s
}

unsafe fn manifest(app: &str, paradigm: &str, stage: &str) -> *mut DoaManifest {
    let mut m = ptr::null_mut();
    let status = doa_manifest_new(c(app).as_ptr(), c(paradigm).as_ptr(), c(stage).as_ptr(), &mut m);
    assert_eq!(status, DoaStatus::Ok);
    m
}

#[test]
fn manifests_and_diff() {
    unsafe {
        let (min, data) = (manifest("ride_allocation", "fbp", "min"), manifest("ride_allocation", "fbp", "data"));
        assert!(doa_manifest_len(min) > 0);
        assert_eq!(doa_manifest_len(data), doa_manifest_len(min) + 1);
        let mut n = 0usize;
        assert_eq!(doa_manifest_diff_count(min, data, &mut n), DoaStatus::Ok);
        assert_eq!(n, 1);
        let mut text = ptr::null_mut();
        assert_eq!(doa_manifest_diff_table(min, data, &mut text), DoaStatus::Ok);
        assert_eq!(take(text), "added    dataset_collector\naffected_count 1\n");
        doa_manifest_free(min);
        doa_manifest_free(data);
        doa_manifest_free(ptr::null_mut());
        assert_eq!(doa_manifest_len(ptr::null()), 0);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        let status = doa_manifest_new(c("nosuchapp").as_ptr(), c("fbp").as_ptr(), c("min").as_ptr(), &mut m);
        assert_eq!(status, DoaStatus::UnknownName);
        assert!(m.is_null());
        assert!(last_error().contains("nosuchapp"));

        let status = doa_manifest_new(ptr::null(), c("fbp").as_ptr(), c("min").as_ptr(), &mut m);
        assert_eq!(status, DoaStatus::NullArgument);
        assert_eq!(last_error(), "app is null");

        let bad = [0xffu8, 0];
        let status = doa_manifest_new(bad.as_ptr().cast(), c("fbp").as_ptr(), c("min").as_ptr(), &mut m);
        assert_eq!(status, DoaStatus::InvalidUtf8);

        let status = doa_manifest_new(c("mblogger").as_ptr(), c("soa").as_ptr(), c("min").as_ptr(), ptr::null_mut());
        assert_eq!(status, DoaStatus::NullArgument);

        let mut n = 0usize;
        assert_eq!(doa_manifest_diff_count(ptr::null(), ptr::null(), &mut n), DoaStatus::NullArgument);
    }
}

#[test]
fn runs_and_equivalence() {
    unsafe {
        let mut r = ptr::null_mut();
        let status = doa_run(c("insurance_claims").as_ptr(), c("fbp").as_ptr(), c("min").as_ptr(), 40, 5, &mut r);
        assert_eq!(status, DoaStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(doa_report_digest(r, &mut s), DoaStatus::Ok);
        let digest = take(s);
        assert_eq!(digest.len(), 64);
        assert_eq!(doa_report_json(r, &mut s), DoaStatus::Ok);
        assert!(take(s).contains(&digest));
        doa_report_free(r);

        let mut same = false;
        assert_eq!(doa_equiv(c("ride_allocation").as_ptr(), 40, 5, &mut same), DoaStatus::Ok);
        assert!(same);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(doa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/doaflow.h")).unwrap();
    for name in [
        "doa_version",
        "doa_last_error_message",
        "doa_string_free",
        "doa_manifest_new",
        "doa_manifest_len",
        "doa_manifest_free",
        "doa_manifest_diff_count",
        "doa_manifest_diff_table",
        "doa_run",
        "doa_report_digest",
        "doa_report_json",
        "doa_report_free",
        "doa_equiv",
        "typedef struct DoaManifest DoaManifest;",
        "DOA_STATUS_RUNTIME_FAILURE = 4",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<this test> -> target/<profile>/libdoaflow_ffi.a
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libdoaflow_ffi.a");
    lib.exists().then_some(lib)
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_and_runs() {
    let (Some(lib), true) = (static_lib(), have("cc")) else {
        eprintln!("skipping: no C compiler or static library");
        return;
    };
    let exe = Path::new(env!("CARGO_TARGET_TMPDIR")).join("doaflow_smoke");
    let dir = crate_dir();
    let build = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(
        stdout,
        "affected 1\nerror unknown app \"nope\"\nequiv MATCH\ndigest 64\n"
    );
}
