use std::ffi::{c_char, CStr, CString};
use std::ptr;

use clearing_ffi::*;

fn fixture(name: &str) -> CString {
    let p = format!("{}/../core/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    CString::new(p).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe { clearing_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn solve_n_clears_the_market() {
    let mut model = ptr::null_mut();
    let path = fixture("lq_scalar.toml");
    assert_eq!(unsafe { clearing_model_from_file(path.as_ptr(), &mut model) }, ClearingStatus::Ok);
    let (mut n, mut agents, mut nodes) = (0, 0, 0);
    assert_eq!(unsafe { clearing_model_dims(model, &mut n, &mut agents, &mut nodes) }, ClearingStatus::Ok);
    assert_eq!((n, agents), (1, 4));
    assert!(nodes > 1);

    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { clearing_solve_n(model, 7, &mut sol) }, ClearingStatus::Ok);
    let mut r = f64::NAN;
    assert_eq!(unsafe { clearing_solution_residual(sol, &mut r) }, ClearingStatus::Ok);
    assert!(r <= 1e-10, "residual {r}");
    let mut p = [f64::NAN; 1];
    assert_eq!(unsafe { clearing_solution_price(sol, 0, p.as_mut_ptr(), 1) }, ClearingStatus::Ok);
    assert!(p[0].is_finite());
    let mut b = [f64::NAN; 1];
    assert_eq!(unsafe { clearing_solution_beta(sol, nodes - 1, b.as_mut_ptr(), 1) }, ClearingStatus::Ok);
    assert!(b[0].is_finite());

    assert_eq!(unsafe { clearing_solution_price(sol, nodes, p.as_mut_ptr(), 1) }, ClearingStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
    assert_eq!(unsafe { clearing_solution_price(sol, 0, p.as_mut_ptr(), 0) }, ClearingStatus::InvalidArgument);

    unsafe {
        clearing_solution_free(sol);
        clearing_model_free(model);
    }
}

#[test]
fn solve_mfg_from_text() {
    let text = std::fs::read_to_string(fixture("lq_scalar.toml").to_str().unwrap()).unwrap();
    let text = CString::new(text).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { clearing_model_from_str(text.as_ptr(), &mut model) }, ClearingStatus::Ok);
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { clearing_solve_mfg(model, &mut sol) }, ClearingStatus::Ok);
    let mut p = [f64::NAN; 1];
    assert_eq!(unsafe { clearing_solution_price(sol, 0, p.as_mut_ptr(), 1) }, ClearingStatus::Ok);
    assert!(p[0].is_finite());
    unsafe {
        clearing_solution_free(sol);
        clearing_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let mut model = ptr::null_mut();
    let bad = CString::new("this is = = not toml").unwrap();
    assert_eq!(unsafe { clearing_model_from_str(bad.as_ptr(), &mut model) }, ClearingStatus::Parse);
    assert!(model.is_null());
    assert!(clearing_last_error_length() > 0);

    let missing = CString::new("/nonexistent/model.toml").unwrap();
    let st = unsafe { clearing_model_from_file(missing.as_ptr(), &mut model) };
    assert_ne!(st, ClearingStatus::Ok);

    assert_eq!(unsafe { clearing_model_from_str(ptr::null(), &mut model) }, ClearingStatus::NullPointer);
    assert_eq!(last_error(), "text is null");
    let mut r = 0.0;
    assert_eq!(unsafe { clearing_solution_residual(ptr::null(), &mut r) }, ClearingStatus::NullPointer);

    // truncation keeps a terminating NUL and reports the full length
    let mut tiny = [1 as c_char; 4];
    let full = unsafe { clearing_last_error_message(tiny.as_mut_ptr(), tiny.len()) };
    assert_eq!(full, "solution is null".len());
    assert_eq!(unsafe { CStr::from_ptr(tiny.as_ptr()) }.to_str().unwrap(), "sol");

    unsafe {
        clearing_model_free(ptr::null_mut());
        clearing_solution_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/clearing.h")).unwrap();
    for name in [
        "clearing_model_from_str",
        "clearing_model_from_file",
        "clearing_solve_n",
        "clearing_solve_mfg",
        "clearing_solution_price",
        "clearing_last_error_message",
        "CLEARING_STATUS_OK = 0",
        "typedef struct ClearingModel ClearingModel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(clearing_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
