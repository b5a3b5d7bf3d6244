//! C ABI for the fpme core: opaque handles, status codes and a per-thread
//! error message. Every function returns an `FpmeStatus`; results come back
//! through out-pointers. Handles are freed with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use fpme::frlap::StiffnessForm;
use fpme::grid::{EnergyParams, Grid, GridFunction};
use fpme::laneemden::GroundState;
use fpme::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpmeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GridMismatch = 3,
    AssemblyFailure = 4,
    NoConvergence = 5,
    CheckFailed = 6,
    StepTooLarge = 7,
    Io = 8,
    Panic = 9,
    Other = 10,
}

/// Energy parameters; `alpha <= 0` selects the default `1 / (m - 1)`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FpmeParams {
    pub s: f64,
    pub m: f64,
    pub alpha: f64,
}

pub struct FpmeGrid(Arc<Grid>);
pub struct FpmeForm(StiffnessForm);
pub struct FpmeGroundState(GroundState);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> FpmeStatus {
    match err {
        Error::InvalidDomain(_)
        | Error::InvalidParams(_)
        | Error::DomainBoundary { .. }
        | Error::NonPositiveTime(_)
        | Error::Negativity(_)
        | Error::Config(_) => FpmeStatus::InvalidArgument,
        Error::GridMismatch => FpmeStatus::GridMismatch,
        Error::AssemblyFailure(_) => FpmeStatus::AssemblyFailure,
        Error::NoConvergence { .. } => FpmeStatus::NoConvergence,
        Error::CheckFailed(_) => FpmeStatus::CheckFailed,
        Error::StepTooLarge(_) => FpmeStatus::StepTooLarge,
        Error::Io(_) | Error::MissingFile(_) | Error::Format(_) => FpmeStatus::Io,
        _ => FpmeStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FpmeStatus>) -> FpmeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FpmeStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            FpmeStatus::Panic
        }
    }
}

fn fail(err: Error) -> FpmeStatus {
    set_error(&err.to_string());
    status_of(&err)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, FpmeStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle");
        FpmeStatus::NullPointer
    })
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], FpmeStatus> {
    if p.is_null() {
        set_error("null input buffer");
        return Err(FpmeStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], FpmeStatus> {
    if p.is_null() {
        set_error("null output buffer");
        return Err(FpmeStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(len: usize, n: usize) -> Result<(), FpmeStatus> {
    if len == n {
        Ok(())
    } else {
        set_error(&format!("buffer length {len} does not match grid size {n}"));
        Err(FpmeStatus::GridMismatch)
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), FpmeStatus> {
    if out.is_null() {
        set_error("null out-pointer");
        return Err(FpmeStatus::NullPointer);
    }
    out.write(value);
    Ok(())
}

fn params(p: FpmeParams) -> Result<EnergyParams, FpmeStatus> {
    let r = if p.alpha > 0.0 {
        EnergyParams::new(p.s, p.m, p.alpha)
    } else {
        EnergyParams::with_default_alpha(p.s, p.m)
    };
    r.map_err(fail)
}

/// Message for the last failing call on this thread; valid until the next call.
#[no_mangle]
pub extern "C" fn fpme_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn fpme_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Uniform grid with `n` interior nodes on `(a, b)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fpme_grid_new(a: f64, b: f64, n: usize, out: *mut *mut FpmeGrid) -> FpmeStatus {
    guard(|| {
        let grid = Grid::new(a, b, n).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(FpmeGrid(grid))))
    })
}

/// # Safety
/// `grid` must come from `fpme_grid_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fpme_grid_free(grid: *mut FpmeGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle; `n` and `h` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fpme_grid_info(grid: *const FpmeGrid, n: *mut usize, h: *mut f64) -> FpmeStatus {
    guard(|| {
        let g = &handle(grid)?.0;
        write_out(n, g.n())?;
        write_out(h, g.h())
    })
}

/// Copies the node abscissae into `out[0..len]`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fpme_grid_nodes(grid: *const FpmeGrid, out: *mut f64, len: usize) -> FpmeStatus {
    guard(|| {
        let g = &handle(grid)?.0;
        check_len(len, g.n())?;
        slice_mut(out, len)?.copy_from_slice(g.nodes());
        Ok(())
    })
}

/// Assembles the stiffness form for fractional order `s`.
///
/// # Safety
/// `grid` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fpme_form_assemble(
    grid: *const FpmeGrid,
    s: f64,
    quad_order: usize,
    out: *mut *mut FpmeForm,
) -> FpmeStatus {
    guard(|| {
        let g = &handle(grid)?.0;
        let form = StiffnessForm::assemble(g, s, quad_order).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(FpmeForm(form))))
    })
}

/// # Safety
/// `form` must come from `fpme_form_assemble` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fpme_form_free(form: *mut FpmeForm) {
    if !form.is_null() {
        drop(Box::from_raw(form));
    }
}

/// Row-major copy of the `n x n` matrix into `out[0..len]`, `len = n * n`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fpme_form_matrix(form: *const FpmeForm, out: *mut f64, len: usize) -> FpmeStatus {
    guard(|| {
        let f = &handle(form)?.0;
        let n = f.n();
        check_len(len, n * n)?;
        let dst = slice_mut(out, len)?;
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = f.matrix()[(i, j)];
            }
        }
        Ok(())
    })
}

/// `y = A x`.
///
/// # Safety
/// `x` and `y` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fpme_form_apply(form: *const FpmeForm, x: *const f64, y: *mut f64, len: usize) -> FpmeStatus {
    guard(|| {
        let f = &handle(form)?.0;
        check_len(len, f.n())?;
        let x = slice(x, len)?.to_vec();
        f.apply_slice(&x, slice_mut(y, len)?);
        Ok(())
    })
}

/// Writes 1 to `ok` when the matrix has the M-matrix sign pattern, else 0.
///
/// # Safety
/// `ok` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fpme_form_m_structure(form: *const FpmeForm, ok: *mut i32) -> FpmeStatus {
    guard(|| {
        let f = &handle(form)?.0;
        write_out(ok, i32::from(f.m_structure().passed()))
    })
}

/// Energy `1/2 phi^T A phi - (alpha / q) sum h |phi|^q`.
///
/// # Safety
/// `phi` must hold `len` doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fpme_energy(
    form: *const FpmeForm,
    p: FpmeParams,
    phi: *const f64,
    len: usize,
    out: *mut f64,
) -> FpmeStatus {
    guard(|| {
        let f = &handle(form)?.0;
        let p = params(p)?;
        check_len(len, f.n())?;
        let phi = GridFunction::new(f.grid(), slice(phi, len)?.to_vec()).map_err(fail)?;
        let e = fpme::energy::energy(f, &p, &phi).map_err(fail)?;
        write_out(out, e.total)
    })
}

/// Positive ground state of the Lane-Emden problem.
///
/// # Safety
/// `form` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fpme_ground_state(
    form: *const FpmeForm,
    p: FpmeParams,
    out: *mut *mut FpmeGroundState,
) -> FpmeStatus {
    guard(|| {
        let f = &handle(form)?.0;
        let p = params(p)?;
        let gs = fpme::laneemden::ground_state(f, &p).map_err(fail)?;
        write_out(out, Box::into_raw(Box::new(FpmeGroundState(gs))))
    })
}

/// # Safety
/// `gs` must come from `fpme_ground_state` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fpme_ground_state_free(gs: *mut FpmeGroundState) {
    if !gs.is_null() {
        drop(Box::from_raw(gs));
    }
}

/// First eigenvalue and ground level.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fpme_ground_state_levels(
    gs: *const FpmeGroundState,
    lambda1: *mut f64,
    level: *mut f64,
) -> FpmeStatus {
    guard(|| {
        let g = &handle(gs)?.0;
        write_out(lambda1, g.lambda1)?;
        write_out(level, g.level)
    })
}

/// Nodal values of `w` into `out[0..len]`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fpme_ground_state_values(gs: *const FpmeGroundState, out: *mut f64, len: usize) -> FpmeStatus {
    guard(|| {
        let g = &handle(gs)?.0;
        check_len(len, g.w.values().len())?;
        slice_mut(out, len)?.copy_from_slice(g.w.values());
        Ok(())
    })
}

/// One minimizing-movement step `v_prev -> v_new`; the new energy goes to `energy`.
///
/// # Safety
/// `v_prev` and `v_new` must hold `len` doubles; `energy` may be null.
#[no_mangle]
pub unsafe extern "C" fn fpme_step(
    form: *const FpmeForm,
    p: FpmeParams,
    h: f64,
    v_prev: *const f64,
    v_new: *mut f64,
    len: usize,
    energy: *mut f64,
) -> FpmeStatus {
    guard(|| {
        let f = &handle(form)?.0;
        let p = params(p)?;
        check_len(len, f.n())?;
        let prev = GridFunction::new(f.grid(), slice(v_prev, len)?.to_vec()).map_err(fail)?;
        let r = fpme::stepper::step(f, &p, h, &prev).map_err(fail)?;
        slice_mut(v_new, len)?.copy_from_slice(r.v_new.values());
        if !energy.is_null() {
            energy.write(r.energy_new);
        }
        Ok(())
    })
}
