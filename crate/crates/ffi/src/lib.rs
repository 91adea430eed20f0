//! C interface to the clearing engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a
//! [`ClearingStatus`]; on failure a message is kept per thread and can be
//! read with [`clearing_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clearing_core::finite_market::solve_full_equilibrium;
use clearing_core::mean_field::solve_mfg;
use clearing_core::model::{load_model, parse_model, ModelSpec};
use clearing_core::scenario::{build_lattice, sample_idiosyncratic, NodeField, NoiseLattice, TimeGrid};
use clearing_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClearingStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Assumption = 5,
    Unsupported = 6,
    Solver = 7,
    Panic = 8,
}

/// A validated model together with its common-noise lattice.
pub struct ClearingModel {
    spec: ModelSpec,
    lattice: NoiseLattice,
}

/// Price and major flow of a solved equilibrium on every lattice node.
pub struct ClearingSolution {
    price: NodeField,
    beta: NodeField,
    residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ClearingStatus {
    match e {
        Error::Parse(_) => ClearingStatus::Parse,
        Error::Io(_) => ClearingStatus::Io,
        Error::Assumption(_) => ClearingStatus::Assumption,
        Error::Unsupported(_) => ClearingStatus::Unsupported,
        Error::Singular(_) | Error::NotConverged { .. } | Error::Lattice(_) => ClearingStatus::Solver,
        Error::Validation(_) | Error::Shape { .. } | Error::NodeBudget { .. } => ClearingStatus::InvalidArgument,
    }
}

/// Run `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (ClearingStatus, String)>) -> ClearingStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClearingStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ClearingStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (ClearingStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ClearingStatus, String) {
    (ClearingStatus::NullPointer, format!("{what} is null"))
}

fn into_model(spec: ModelSpec) -> Result<Box<ClearingModel>, (ClearingStatus, String)> {
    let grid = TimeGrid::new(spec.noise.horizon, spec.noise.steps).map_err(core_err)?;
    let lattice = build_lattice(grid, &spec.dims, spec.noise.branching).map_err(core_err)?;
    Ok(Box::new(ClearingModel { spec, lattice }))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ClearingStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (ClearingStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Parse a model from TOML or JSON text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer. On
/// success `*out` holds a handle to release with [`clearing_model_free`].
#[no_mangle]
pub unsafe extern "C" fn clearing_model_from_str(text: *const c_char, out: *mut *mut ClearingModel) -> ClearingStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = c_str(text, "text")?;
        let model = into_model(parse_model(text, None).map_err(core_err)?)?;
        *out = Box::into_raw(model);
        Ok(())
    })
}

/// Load a model file (`.toml` or `.json`).
///
/// # Safety
/// As for [`clearing_model_from_str`], with `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn clearing_model_from_file(path: *const c_char, out: *mut *mut ClearingModel) -> ClearingStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = c_str(path, "path")?;
        let model = into_model(load_model(Path::new(path)).map_err(core_err)?)?;
        *out = Box::into_raw(model);
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clearing_model_free(model: *mut ClearingModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of securities, minor agents and lattice nodes.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clearing_model_dims(
    model: *const ClearingModel,
    n: *mut usize,
    agents: *mut usize,
    nodes: *mut usize,
) -> ClearingStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if n.is_null() || agents.is_null() || nodes.is_null() {
            return Err(null("output pointer"));
        }
        *n = m.spec.dims.n;
        *agents = m.spec.dims.agents;
        *nodes = m.lattice.len();
        Ok(())
    })
}

/// Solve the finite-N equilibrium with idiosyncratic atoms drawn from `seed`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer. Release the
/// result with [`clearing_solution_free`].
#[no_mangle]
pub unsafe extern "C" fn clearing_solve_n(model: *const ClearingModel, seed: u64, out: *mut *mut ClearingSolution) -> ClearingStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let atoms = sample_idiosyncratic(&m.spec.idio, m.spec.dims.agents, seed).map_err(core_err)?;
        let eq = solve_full_equilibrium(&m.spec, &m.lattice, &atoms).map_err(core_err)?;
        let sol = ClearingSolution { beta: eq.beta_unnormalized(), price: eq.price, residual: eq.clearing_residual };
        *out = Box::into_raw(Box::new(sol));
        Ok(())
    })
}

/// Solve the mean-field equilibrium. The residual reported is zero.
///
/// # Safety
/// As for [`clearing_solve_n`].
#[no_mangle]
pub unsafe extern "C" fn clearing_solve_mfg(model: *const ClearingModel, out: *mut *mut ClearingSolution) -> ClearingStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mfg = solve_mfg(&m.spec, &m.lattice).map_err(core_err)?;
        *out = Box::into_raw(Box::new(ClearingSolution { price: mfg.price, beta: mfg.beta_hat, residual: 0.0 }));
        Ok(())
    })
}

/// Release a solution. Null is ignored.
///
/// # Safety
/// `solution` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clearing_solution_free(solution: *mut ClearingSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

unsafe fn copy_node(field: &NodeField, node: usize, out: *mut f64, len: usize) -> Result<(), (ClearingStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if node >= field.nodes() {
        return Err((ClearingStatus::InvalidArgument, format!("node {node} out of range ({} nodes)", field.nodes())));
    }
    if len < field.dim() {
        return Err((ClearingStatus::InvalidArgument, format!("buffer holds {len} values, need {}", field.dim())));
    }
    ptr::copy_nonoverlapping(field.get(node).as_ptr(), out, field.dim());
    Ok(())
}

/// Copy the price vector at `node` into `out` (capacity `len`, at least n).
///
/// # Safety
/// `solution` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn clearing_solution_price(solution: *const ClearingSolution, node: usize, out: *mut f64, len: usize) -> ClearingStatus {
    guard(|| copy_node(&solution.as_ref().ok_or_else(|| null("solution"))?.price, node, out, len))
}

/// Copy the major flow β̂ at `node` into `out`.
///
/// # Safety
/// As for [`clearing_solution_price`].
#[no_mangle]
pub unsafe extern "C" fn clearing_solution_beta(solution: *const ClearingSolution, node: usize, out: *mut f64, len: usize) -> ClearingStatus {
    guard(|| copy_node(&solution.as_ref().ok_or_else(|| null("solution"))?.beta, node, out, len))
}

/// Largest node-wise clearing residual `|Σα̂ⁱ + β̂|`.
///
/// # Safety
/// `solution` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clearing_solution_residual(solution: *const ClearingSolution, out: *mut f64) -> ClearingStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.residual;
        Ok(())
    })
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL; 0 if there is none.
#[no_mangle]
pub extern "C" fn clearing_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copy the last error message on this thread into `buf` (capacity `len`),
/// truncating and always NUL-terminating. Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn clearing_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if !buf.is_null() && len > 0 {
            let k = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn clearing_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
