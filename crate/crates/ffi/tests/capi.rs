use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use chaoskit_ffi::*;

fn last_error() -> Option<String> {
    let p = ck_last_error_message();
    if p.is_null() {
        return None;
    }
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { ck_string_free(p) };
    Some(s)
}

struct Fixture {
    space: *mut CkSpace,
    f: *mut CkFunctional,
}

impl Fixture {
    fn new(masses: &[f64], json: &str) -> Self {
        let mut space = ptr::null_mut();
        assert_eq!(unsafe { ck_space_new(masses.as_ptr(), masses.len(), &mut space) }, CkStatus::Ok);
        let mut f = ptr::null_mut();
        let j = CString::new(json).unwrap();
        assert_eq!(unsafe { ck_functional_from_json(space, j.as_ptr(), &mut f) }, CkStatus::Ok);
        Self { space, f }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            ck_functional_free(self.f);
            ck_space_free(self.space);
        }
    }
}

const FIRST: &str = r#"{"kernels": {"1": {"order": 1, "entries": [{"idx": [0], "val": 1.0}]}}}"#;
const SECOND: &str = r#"{"kernels": {"2": {"order": 2, "entries": [{"idx": [0, 1], "val": 1.0}]}}}"#;

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ck_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn first_chaos_through_the_abi() {
    let fx = Fixture::new(&[2.0, 1.0], FIRST);
    assert_eq!(unsafe { ck_space_n_cells(fx.space) }, 2);
    let counts = [5u32, 1];
    let mut v = 0.0;
    assert_eq!(unsafe { ck_functional_evaluate(fx.f, counts.as_ptr(), 2, &mut v) }, CkStatus::Ok);
    assert!((v - 3.0).abs() < 1e-14);
    assert!(last_error().is_none());
    assert_eq!(unsafe { ck_add_one_cost(fx.f, counts.as_ptr(), 2, 0, &mut v) }, CkStatus::Ok);
    assert!((v - 1.0).abs() < 1e-14);
    assert_eq!(unsafe { ck_remove_one_cost(fx.f, [0u32, 1].as_ptr(), 2, 0, &mut v) }, CkStatus::Ok);
    assert_eq!(v, 0.0);
    assert_eq!(unsafe { ck_apply_l(fx.f, counts.as_ptr(), 2, &mut v) }, CkStatus::Ok);
    assert!((v + 3.0).abs() < 1e-12);
    assert_eq!(unsafe { ck_exact_moment(fx.f, 4, &mut v) }, CkStatus::Ok);
    assert!((v - (3.0 * 4.0 + 2.0)).abs() < 1e-9);
}

#[test]
fn gamma0_of_second_chaos() {
    let fx = Fixture::new(&[1.0, 1.5], SECOND);
    let counts = [2u32, 3];
    let (mut g, mut l) = (0.0, 0.0);
    assert_eq!(unsafe { ck_gamma0(fx.f, fx.f, counts.as_ptr(), 2, &mut g) }, CkStatus::Ok);
    assert_eq!(unsafe { ck_apply_l(fx.f, counts.as_ptr(), 2, &mut l) }, CkStatus::Ok);
    let mut f = 0.0;
    unsafe { ck_functional_evaluate(fx.f, counts.as_ptr(), 2, &mut f) };
    assert!((l + 2.0 * f).abs() < 1e-9);
    assert!(g >= 0.0);
}

#[test]
fn sampling_is_seeded() {
    let fx = Fixture::new(&[3.0, 0.0, 1.0], r#"{"constant": 1.0}"#);
    let (mut a, mut b) = ([0u32; 3], [0u32; 3]);
    unsafe {
        assert_eq!(ck_sample_poisson(fx.space, 7, a.as_mut_ptr(), 3), CkStatus::Ok);
        assert_eq!(ck_sample_poisson(fx.space, 7, b.as_mut_ptr(), 3), CkStatus::Ok);
        assert_eq!(ck_sample_poisson(fx.space, 7, b.as_mut_ptr(), 2), CkStatus::InvalidArgument);
    }
    assert_eq!(a, b);
    assert_eq!(a[1], 0);
}

#[test]
fn distances_and_bounds() {
    let zero = [0.0f64];
    let mut v = 0.0;
    unsafe {
        assert_eq!(ck_w1_distance(zero.as_ptr(), 1, CkTarget::Normal, 0.0, &mut v), CkStatus::Ok);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert_eq!(ck_ks_distance(zero.as_ptr(), 1, CkTarget::Normal, 0.0, &mut v), CkStatus::Ok);
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(ck_w1_distance(zero.as_ptr(), 1, CkTarget::CenteredGamma, -1.0, &mut v), CkStatus::Library);
        assert_eq!(ck_ks_distance(zero.as_ptr(), 0, CkTarget::Normal, 0.0, &mut v), CkStatus::Library);

        let mut noise = true;
        assert_eq!(ck_fm_w1_rhs_simple(4.0, &mut v, &mut noise), CkStatus::Ok);
        assert!((v - 2.797884560802865).abs() < 1e-12 && !noise);
        assert_eq!(ck_fm_w1_rhs(1, 2.5, &mut v, &mut noise), CkStatus::Ok);
        assert!(v == 0.0 && noise);
        assert_eq!(ck_fm_w1_rhs(0, 4.0, &mut v, ptr::null_mut()), CkStatus::Library);
        assert_eq!(ck_fm_kol_rhs(3.0, &mut v, ptr::null_mut()), CkStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(ck_fm_gamma_rhs(2.0, 2, 16.0, 144.0, 0.0, &mut v, ptr::null_mut()), CkStatus::Ok);
        assert!(v.abs() < 1e-9);
        assert_eq!(ck_fm_gamma_rhs(0.0, 2, 0.0, 0.0, 0.0, &mut v, ptr::null_mut()), CkStatus::Library);
    }
}

#[test]
fn errors_are_reported() {
    let mut space = ptr::null_mut();
    let bad = [-1.0f64];
    unsafe {
        assert_eq!(ck_space_new(bad.as_ptr(), 1, &mut space), CkStatus::Library);
        assert!(last_error().unwrap().contains("invalid space"));
        assert_eq!(ck_space_new(ptr::null(), 1, &mut space), CkStatus::NullPointer);
        assert!(last_error().unwrap().contains("masses"));
    }
    let fx = Fixture::new(&[1.0, 1.0], FIRST);
    let mut f = ptr::null_mut();
    let j = CString::new("{\"kernels\": 3}").unwrap();
    assert_eq!(unsafe { ck_functional_from_json(fx.space, j.as_ptr(), &mut f) }, CkStatus::Library);
    assert!(f.is_null());
    let invalid = b"\xff\0";
    assert_eq!(
        unsafe { ck_functional_from_json(fx.space, invalid.as_ptr().cast(), &mut f) },
        CkStatus::InvalidUtf8
    );
    let mut v = 0.0;
    let counts = [1u32, 2, 3];
    assert_eq!(unsafe { ck_functional_evaluate(fx.f, counts.as_ptr(), 3, &mut v) }, CkStatus::InvalidArgument);
    assert_eq!(unsafe { ck_add_one_cost(fx.f, counts.as_ptr(), 2, 9, &mut v) }, CkStatus::Library);
    assert_eq!(unsafe { ck_functional_evaluate(ptr::null(), counts.as_ptr(), 2, &mut v) }, CkStatus::NullPointer);
    let other = Fixture::new(&[1.0, 3.0], FIRST);
    assert_eq!(unsafe { ck_gamma0(fx.f, other.f, counts.as_ptr(), 2, &mut v) }, CkStatus::InvalidArgument);
    unsafe {
        ck_space_free(ptr::null_mut());
        ck_functional_free(ptr::null_mut());
        ck_string_free(ptr::null_mut());
    }
}

#[test]
fn oversized_oracle_request() {
    let fx = Fixture::new(&[1.0; 20], r#"{"kernels": {"1": {"order": 1, "entries": [{"idx": [0], "val": 1.0}]}}}"#);
    let mut v = 0.0;
    assert_eq!(unsafe { ck_exact_moment(fx.f, 2, &mut v) }, CkStatus::TooLarge);
    assert!(last_error().is_some());
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "chaoskit.h"

int main(void) {
    double masses[2] = {2.0, 1.0};
    CkSpace *space = NULL;
    if (ck_space_new(masses, 2, &space) != CK_STATUS_OK) return 1;
    CkFunctional *f = NULL;
    const char *json = "{\"kernels\": {\"1\": {\"order\": 1, \"entries\": [{\"idx\": [0], \"val\": 1.0}]}}}";
    if (ck_functional_from_json(space, json, &f) != CK_STATUS_OK) return 2;
    uint32_t counts[2] = {5, 1};
    double v = 0.0;
    if (ck_functional_evaluate(f, counts, 2, &v) != CK_STATUS_OK || fabs(v - 3.0) > 1e-12) return 3;
    if (ck_exact_moment(f, 4, &v) != CK_STATUS_OK || fabs(v - 14.0) > 1e-9) return 4;
    if (ck_functional_evaluate(f, counts, 3, &v) != CK_STATUS_INVALID_ARGUMENT) return 5;
    char *msg = ck_last_error_message();
    if (msg == NULL) return 6;
    ck_string_free(msg);
    bool noise = true;
    if (ck_fm_w1_rhs_simple(4.0, &v, &noise) != CK_STATUS_OK || noise) return 7;
    printf("%s %.6f\n", ck_version(), v);
    ck_functional_free(f);
    ck_space_free(space);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libchaoskit_ffi.a");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let mut build = Command::new(cargo);
    build.args(["build", "-p", "chaoskit-ffi", "--lib"]);
    if profile_dir.ends_with("release") {
        build.arg("--release");
    }
    let built = build.status().map(|s| s.success()).unwrap_or(false);
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !built || !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: could not build {} or no C compiler", lib.display());
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).contains("2.797885"));
}
