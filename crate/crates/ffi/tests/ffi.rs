use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qbae_ffi::*;

const S: [f64; 8] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
const C: [f64; 8] = [0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, -0.5];
const OM: [f64; 8] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
const OP: [f64; 8] = [0.0; 8];

fn michelson() -> *mut QbaeSystem {
    let mut sys = ptr::null_mut();
    let st = unsafe {
        qbae_system_new(
            2,
            2,
            S.as_ptr(),
            C.as_ptr(),
            C.as_ptr(),
            OM.as_ptr(),
            OP.as_ptr(),
            &mut sys,
        )
    };
    assert_eq!(st, QbaeStatus::Ok);
    assert!(!sys.is_null());
    sys
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { qbae_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn certifies_michelson_block() {
    let sys = michelson();
    let (mut n, mut m) = (0, 0);
    assert_eq!(
        unsafe { qbae_system_dims(sys, &mut n, &mut m) },
        QbaeStatus::Ok
    );
    assert_eq!((n, m), (2, 2));

    let mut verdict: c_int = 0;
    let mut residual = -1.0;
    let st = unsafe {
        qbae_certify_block(
            sys,
            QBAE_QUAD_Q,
            QBAE_QUAD_P,
            0.0,
            &mut verdict,
            &mut residual,
        )
    };
    assert_eq!(st, QbaeStatus::Ok);
    assert_eq!(verdict, 1);
    assert!(residual <= 1e-10);

    let st = unsafe {
        qbae_certify_block(
            sys,
            QBAE_QUAD_P,
            QBAE_QUAD_Q,
            0.0,
            &mut verdict,
            &mut residual,
        )
    };
    assert_eq!(st, QbaeStatus::Ok);
    assert_eq!(verdict, 0);

    let mut predictions = 0;
    let mut confirmed: c_int = 0;
    assert_eq!(
        unsafe { qbae_bae_analyze(sys, &mut predictions, &mut confirmed) },
        QbaeStatus::Ok
    );
    assert_eq!((predictions, confirmed), (1, 1));
    unsafe { qbae_system_free(sys) };
}

#[test]
fn transfer_buffer_protocol() {
    let sys = michelson();
    let mut needed = 0;
    let st = unsafe { qbae_transfer(sys, 2.0, 0.5, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(st, QbaeStatus::BufferTooSmall);
    assert_eq!(needed, 32);
    assert!(last_error().contains("32"));

    let mut buf = vec![0.0; needed];
    let st = unsafe { qbae_transfer(sys, 2.0, 0.5, buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(st, QbaeStatus::Ok);
    // The (q_out, p_in) block is zero and the q-q block is the identity.
    for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        let k = 2 * (i * 4 + j);
        assert!(buf[k].abs() < 1e-12 && buf[k + 1].abs() < 1e-12);
    }
    assert!((buf[0] - 1.0).abs() < 1e-12);
    unsafe { qbae_system_free(sys) };
}

#[test]
fn rejects_bad_input() {
    let mut sys = ptr::null_mut();
    let st = unsafe {
        qbae_system_new(
            2,
            2,
            S.as_ptr(),
            ptr::null(),
            C.as_ptr(),
            OM.as_ptr(),
            OP.as_ptr(),
            &mut sys,
        )
    };
    assert_eq!(st, QbaeStatus::NullPointer);
    assert!(sys.is_null());

    let bad_op = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let st = unsafe {
        qbae_system_new(
            2,
            2,
            S.as_ptr(),
            C.as_ptr(),
            C.as_ptr(),
            OM.as_ptr(),
            bad_op.as_ptr(),
            &mut sys,
        )
    };
    assert_eq!(st, QbaeStatus::InvalidSystem);
    assert!(last_error().starts_with("Omega_plus"), "{}", last_error());

    let json = CString::new(r#"{"name": "x", "n": 1, "m": 1, "S": [[[1, 0, 0]]]}"#).unwrap();
    let st = unsafe { qbae_system_from_json(json.as_ptr(), &mut sys) };
    assert_eq!(st, QbaeStatus::ParseError);
    assert!(last_error().contains("line 1"));

    let sys = michelson();
    let (mut v, mut r): (c_int, f64) = (0, 0.0);
    let st = unsafe { qbae_certify_block(sys, 7, QBAE_QUAD_P, 0.0, &mut v, &mut r) };
    assert_eq!(st, QbaeStatus::InvalidArgument);
    let st = unsafe { qbae_certify_block(ptr::null(), 0, 0, 0.0, &mut v, &mut r) };
    assert_eq!(st, QbaeStatus::NullPointer);
    unsafe { qbae_system_free(sys) };
    unsafe { qbae_system_free(ptr::null_mut()) };
}

#[test]
fn json_system_and_qnd_test() {
    let json = CString::new(
        r#"{"name": "probe", "n": 1, "m": 1, "S": [[[1, 0]]],
            "C_minus": [[[1, 0]]], "C_plus": [[[1, 0]]],
            "Omega_minus": [[[0.5, 0]]], "Omega_plus": [[[0.5, 0]]]}"#,
    )
    .unwrap();
    let mut sys = ptr::null_mut();
    assert_eq!(
        unsafe { qbae_system_from_json(json.as_ptr(), &mut sys) },
        QbaeStatus::Ok
    );
    let (mut v, mut r): (c_int, f64) = (0, 1.0);
    assert_eq!(
        unsafe { qbae_qnd_interaction(sys, 0.0, &mut v, &mut r) },
        QbaeStatus::Ok
    );
    assert_eq!(v, 1);
    assert!(r < 1e-12);
    unsafe { qbae_system_free(sys) };
}

#[test]
fn error_message_truncates() {
    let mut sys = ptr::null_mut();
    unsafe {
        qbae_system_new(
            0,
            1,
            S.as_ptr(),
            C.as_ptr(),
            C.as_ptr(),
            OM.as_ptr(),
            OP.as_ptr(),
            &mut sys,
        )
    };
    let full = unsafe { qbae_last_error_message(ptr::null_mut(), 0) };
    let mut small = [0 as c_char; 4];
    let len = unsafe { qbae_last_error_message(small.as_mut_ptr(), small.len()) };
    assert_eq!(len, full);
    let s = unsafe { CStr::from_ptr(small.as_ptr()) };
    assert_eq!(s.to_bytes().len(), 3);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(qbae_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/qbae.h")).unwrap();
    for name in [
        "typedef struct QbaeSystem QbaeSystem",
        "QBAE_STATUS_OK = 0",
        "qbae_system_new",
        "qbae_system_from_json",
        "qbae_system_free",
        "qbae_certify_block",
        "qbae_transfer",
        "qbae_bae_analyze",
        "qbae_qnd_interaction",
        "qbae_last_error_message",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Directory holding the library artifacts next to this test binary.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_static_library() {
    let lib = artifact_dir().join("libqbae_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
