use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dualstop_ffi::*;

const SMALL_TREE: &str = r#"{"D": 1, "T": 2, "nodes": [
  {"id": 1, "parent": null, "branch_prob": 1.0, "payout": 0.6},
  {"id": 2, "parent": 1, "branch_prob": 0.5, "payout": 0.0},
  {"id": 3, "parent": 1, "branch_prob": 0.5, "payout": 1.0}
]}"#;

fn builtin(spec: &str) -> *mut DsProblem {
    let s = CString::new(spec).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ds_problem_builtin(s.as_ptr(), &mut p) }, DsStatus::Ok);
    p
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ds_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn exact_values_on_two_point() {
    let p = builtin("two_point(2)");
    let mut opt = 0.0;
    assert_eq!(unsafe { ds_exact_opt(p, &mut opt) }, DsStatus::Ok);
    assert_eq!(opt, 0.5);
    let mut h = [0.0; 5];
    assert_eq!(unsafe { ds_exact_levels(p, 5, h.as_mut_ptr()) }, DsStatus::Ok);
    for (k, hk) in h.iter().enumerate() {
        // H_k = (1/2)(1/2)^k for k >= 1
        assert!((hk - 0.5f64.powi(k as i32 + 2)).abs() < 1e-15);
    }
    assert_eq!(unsafe { ds_problem_horizon(p) }, 2);
    unsafe { ds_problem_free(p) };
}

#[test]
fn tree_json_round_trip_and_bad_tree() {
    let json = CString::new(SMALL_TREE).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { ds_problem_from_tree_json(json.as_ptr(), DsFramework::Minimize, &mut p) };
    assert_eq!(s, DsStatus::Ok);
    let mut opt = 0.0;
    assert_eq!(unsafe { ds_exact_opt(p, &mut opt) }, DsStatus::Ok);
    assert_eq!(opt, 0.5);
    unsafe { ds_problem_free(p) };

    let bad = CString::new(SMALL_TREE.replace("\"branch_prob\": 0.5, \"payout\": 1.0", "\"branch_prob\": 0.6, \"payout\": 1.0")).unwrap();
    let mut q = ptr::null_mut();
    let s = unsafe { ds_problem_from_tree_json(bad.as_ptr(), DsFramework::Minimize, &mut q) };
    assert_eq!(s, DsStatus::InvalidTree);
    assert!(q.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn errors_carry_status_and_message() {
    let s = CString::new("no_such_problem").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ds_problem_builtin(s.as_ptr(), &mut p) }, DsStatus::UnknownProblem);
    assert!(last_error().contains("no_such_problem"));

    assert_eq!(unsafe { ds_problem_builtin(ptr::null(), &mut p) }, DsStatus::NullPointer);
    let mut x = 0.0;
    assert_eq!(unsafe { ds_exact_opt(ptr::null(), &mut x) }, DsStatus::NullPointer);

    let iid = builtin("iid_uniform(3)");
    assert_eq!(unsafe { ds_exact_opt(iid, &mut x) }, DsStatus::InvalidArgument);
    unsafe { ds_problem_free(iid) };
    unsafe { ds_problem_free(ptr::null_mut()) };
}

#[test]
fn practical_estimate_is_seed_deterministic() {
    let p = builtin("iid_uniform(3)");
    let outer = [2000usize, 500];
    let inner = [4usize];
    let run = |seed| {
        let mut e = DsEstimate::default();
        let s = unsafe {
            ds_estimate_opt_min_practical(p, outer.as_ptr(), 2, inner.as_ptr(), 1, DsScheme::Tree, seed, &mut e)
        };
        assert_eq!(s, DsStatus::Ok);
        e
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert_ne!(a.value, run(12).value);
    assert_eq!(a.seed, 11);
    // OPT(3) = 0.3046875
    assert!((a.value - 0.3046875).abs() < 0.06);
    let mut e = DsEstimate::default();
    let s = unsafe { ds_estimate_opt_min_practical(p, ptr::null(), 0, inner.as_ptr(), 1, DsScheme::Tree, 1, &mut e) };
    assert_eq!(s, DsStatus::InvalidArgument);
    unsafe { ds_problem_free(p) };
}

#[test]
fn strict_estimate_respects_ceiling() {
    let p = builtin("two_point(2)");
    let mut e = DsEstimate::default();
    assert_eq!(unsafe { ds_estimate_hk_strict(p, 1, 0.1, 0.1, 0, 5, &mut e) }, DsStatus::Ok);
    assert_eq!(e.calls, 738);
    assert!((e.value - 0.25).abs() <= 0.1);
    assert_eq!(unsafe { ds_estimate_hk_strict(p, 2, 0.1, 0.1, 1000, 5, &mut e) }, DsStatus::BudgetCeiling);
    assert!(last_error().contains("ceiling"));
    assert_eq!(unsafe { ds_estimate_hk_strict(p, 1, 1.5, 0.1, 0, 5, &mut e) }, DsStatus::InvalidArgument);
    unsafe { ds_problem_free(p) };
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(ds_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dualstop.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "ds_last_error_message",
        "ds_version",
        "ds_problem_builtin",
        "ds_problem_from_tree_json",
        "ds_problem_free",
        "ds_problem_horizon",
        "ds_exact_opt",
        "ds_exact_levels",
        "ds_estimate_opt_min_practical",
        "ds_estimate_hk_strict",
        "typedef struct DsProblem DsProblem",
        "DS_STATUS_BUDGET_CEILING = 6",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "dualstop.h"
int main(void) {
    DsProblem *p = NULL;
    if (ds_problem_builtin("two_point(4)", &p) != DS_STATUS_OK) return 1;
    double opt = 0.0;
    if (ds_exact_opt(p, &opt) != DS_STATUS_OK) return 2;
    ds_problem_free(p);
    if (ds_problem_builtin("bogus", &p) != DS_STATUS_UNKNOWN_PROBLEM) return 3;
    printf("%.6f %s\n", opt, ds_last_error_message());
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libdualstop_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("0.250000 unknown problem `bogus`"), "{text}");
}
