use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ascontrol_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { asc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn problem(name: &str, level: u32) -> *mut AscProblem {
    let name = CString::new(name).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { asc_problem_new_preset(name.as_ptr(), level, 1e-2, 0.0, 0.0, &mut out) };
    assert_eq!(st, AscStatus::ASC_OK, "{}", last_error());
    out
}

#[test]
fn solve_and_copy_out() {
    let p = problem("CC-Pb1", 1);
    let n = unsafe { asc_problem_size(p) };
    assert_eq!(n, 27);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { asc_solve(p, ASC_METHOD_GMRES_IPF, ASC_FORCING_EXACT, &mut r) }, AscStatus::ASC_OK);
    unsafe {
        assert_eq!(asc_result_outcome(r), ASC_OUTCOME_CONVERGED);
        assert!(asc_result_newton_iterations(r) >= 1);
        assert!(asc_result_mean_linear_iterations(r) > 0.0);
        assert!(asc_result_kkt_norm(r) <= 1e-8);
        let mut u = vec![f64::NAN; n];
        assert_eq!(asc_result_copy_control(r, u.as_mut_ptr(), n), AscStatus::ASC_OK);
        assert!(u.iter().all(|v| v.is_finite()));
        for copy in [asc_result_copy_state, asc_result_copy_adjoint, asc_result_copy_multiplier] {
            let mut v = vec![f64::NAN; n];
            assert_eq!(copy(r, v.as_mut_ptr(), n), AscStatus::ASC_OK);
            assert!(v.iter().all(|x| x.is_finite()));
        }
        let mut short = vec![0.0; n - 1];
        assert_eq!(asc_result_copy_state(r, short.as_mut_ptr(), n - 1), AscStatus::ASC_BUFFER_TOO_SMALL);
        assert!(last_error().contains("need 27"));
        asc_result_free(r);
        asc_problem_free(p);
    }
}

#[test]
fn error_codes() {
    let mut out = ptr::null_mut();
    let bad = CString::new("XX-Pb9").unwrap();
    unsafe {
        assert_eq!(asc_problem_new_preset(bad.as_ptr(), 1, 1e-2, 0.0, 0.0, &mut out), AscStatus::ASC_INVALID_ARGUMENT);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(asc_problem_new_preset(ptr::null(), 1, 1e-2, 0.0, 0.0, &mut out), AscStatus::ASC_NULL_POINTER);
        let cc = CString::new("CC-Pb1").unwrap();
        assert_eq!(asc_problem_new_preset(cc.as_ptr(), 0, 1e-2, 0.0, 0.0, &mut out), AscStatus::ASC_INVALID_ARGUMENT);
        assert_eq!(asc_problem_size(ptr::null()), 0);
        assert_eq!(asc_result_outcome(ptr::null()), -1);
        asc_problem_free(ptr::null_mut());
        asc_result_free(ptr::null_mut());
    }
    let p = problem("SC-Pb1", 1);
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(asc_solve(p, 7, ASC_FORCING_EXACT, &mut r), AscStatus::ASC_INVALID_ARGUMENT);
        assert_eq!(asc_solve(p, ASC_METHOD_GMRES_IPF, 9, &mut r), AscStatus::ASC_INVALID_ARGUMENT);
        assert_eq!(asc_solve(p, ASC_METHOD_BPCG_BT, ASC_FORCING_EXACT, &mut r), AscStatus::ASC_UNSUPPORTED);
        assert!(r.is_null());
        assert_eq!(asc_solve(p, ASC_METHOD_MINRES_BDF, ASC_FORCING_INEXACT, &mut r), AscStatus::ASC_OK);
        assert_eq!(asc_result_outcome(r), ASC_OUTCOME_CONVERGED);
        asc_result_free(r);
        asc_problem_free(p);
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ascontrol.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["asc_problem_new_preset", "asc_solve", "asc_result_copy_control", "asc_last_error_message", "ASC_BUFFER_TOO_SMALL"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"ascontrol.h\"\nint main(void) { AscProblem *p = 0; return (int)asc_problem_size(p); }\n").unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(status.success());
}
