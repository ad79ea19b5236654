//! C interface to `opinf-core`.
//!
//! Models and reduced models are exposed as opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible function
//! returns an [`OpinfStatus`]; on failure a description is available from
//! [`opinf_last_error_message`] on the same thread.
//!
//! Matrices cross the boundary as column-major `double` buffers. Output
//! buffers are written only when the call succeeds.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use opinf_core::linalg::{quadratic_vector, Tolerance};
use opinf_core::model::{random_demo, random_demo_inhomogeneous};
use opinf_core::opinf::{infer_velocity_model, RegressorFlags};
use opinf_core::simulate::{imex_euler_dae, integrate_ode, Inputs, Signal, TimeGrid};
use opinf_core::transform::LerayProjector;
use opinf_core::{experiment, io, DenseMatrix, Error, QuadDaeModel, ReducedQuadModel, Vector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpinfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numerical = 4,
    Io = 5,
    Parse = 6,
    Panic = 7,
}

/// Selects an operator of a reduced model.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpinfOperator {
    /// Linear term, `r x r`.
    A = 0,
    /// Quadratic term on the compact `x_i x_j (i <= j)` features, `r x r(r+1)/2`.
    H = 1,
    /// Input term, `r x m`.
    B = 2,
    /// Constant term, `r x 1`.
    C = 3,
    /// Coefficient of the constraint-input derivative, `r x 1`.
    K = 4,
}

/// Opaque full-order model.
pub struct OpinfModel(QuadDaeModel);

/// Opaque reduced velocity model.
pub struct OpinfRom(ReducedQuadModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> OpinfStatus {
    match e {
        Error::Dimension { .. } => OpinfStatus::Dimension,
        Error::InvalidArgument(_) => OpinfStatus::InvalidArgument,
        Error::Parse { .. } => OpinfStatus::Parse,
        Error::Io { .. } => OpinfStatus::Io,
        Error::Stage { source, .. } => status_of(source),
        _ => OpinfStatus::Numerical,
    }
}

/// Internal failure carrying the code to report.
struct Fail(OpinfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Fail>;

fn null(what: &str) -> Fail {
    Fail(OpinfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> OpinfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            OpinfStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic");
            OpinfStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> FfiResult<DenseMatrix> {
    Ok(DenseMatrix::from_column_slice(rows, cols, slice(p, rows * cols, what)?))
}

unsafe fn string(p: *const c_char, what: &str) -> FfiResult<String> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(OpinfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn model_ref<'a>(m: *const OpinfModel) -> FfiResult<&'a QuadDaeModel> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn rom_ref<'a>(r: *const OpinfRom) -> FfiResult<&'a ReducedQuadModel> {
    r.as_ref().map(|r| &r.0).ok_or_else(|| null("rom"))
}

fn copy_out(dst: &mut [f64], src: &DenseMatrix) -> FfiResult<()> {
    if dst.len() != src.len() {
        return Err(Fail(
            OpinfStatus::Dimension,
            format!("output buffer holds {} values, {} required", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src.as_slice());
    Ok(())
}

/// Parses a comma-separated list of signal names (`zero`, `sin-decay`,
/// `cos-decay`, `const:<x>`); an empty or null string means no inputs.
unsafe fn signals(p: *const c_char) -> FfiResult<Vec<Signal>> {
    if p.is_null() {
        return Ok(Vec::new());
    }
    let s = string(p, "inputs")?;
    Ok(s.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Signal::by_name)
        .collect::<opinf_core::Result<_>>()?)
}

/// Description of why the most recent call on this thread failed; empty
/// after a successful call.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn opinf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn opinf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the deterministic synthetic model for `seed`.
/// `inhomogeneous != 0` adds a constraint input.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn opinf_model_random(
    seed: u64,
    nv: usize,
    np: usize,
    m: usize,
    inhomogeneous: i32,
    out: *mut *mut OpinfModel,
) -> OpinfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = if inhomogeneous != 0 {
            random_demo_inhomogeneous(seed, nv, np, m)?
        } else {
            random_demo(seed, nv, np, m)?
        };
        *out = Box::into_raw(Box::new(OpinfModel(model)));
        Ok(())
    })
}

/// Loads a model manifest written by [`opinf_model_save`] or the `opinf` tool.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opinf_model_load(path: *const c_char, out: *mut *mut OpinfModel) -> OpinfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = PathBuf::from(string(path, "path")?);
        *out = Box::into_raw(Box::new(OpinfModel(io::load_model(&p)?)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn opinf_model_save(model: *const OpinfModel, path: *const c_char) -> OpinfStatus {
    guard(|| {
        let m = model_ref(model)?;
        io::save_model(&PathBuf::from(string(path, "path")?), m)?;
        Ok(())
    })
}

/// Releases a model handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn opinf_model_free(model: *mut OpinfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the velocity, pressure and input dimensions. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn opinf_model_dims(model: *const OpinfModel, nv: *mut usize, np: *mut usize, m: *mut usize) -> OpinfStatus {
    guard(|| {
        let md = model_ref(model)?;
        for (p, v) in [(nv, md.nv()), (np, md.np()), (m, md.m())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Simulates the model from zero velocity on `[0, t_end]` with `steps`
/// semi-implicit Euler steps. `inputs` names one signal per input channel and
/// `uperp` the constraint input (null when the model has none).
/// `v_out` receives `nv x (steps+1)` values; `p_out` may be null or receive `np x (steps+1)`.
///
/// # Safety
/// Pointers must be null or valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn opinf_model_simulate(
    model: *const OpinfModel,
    t_end: f64,
    steps: usize,
    inputs: *const c_char,
    uperp: *const c_char,
    v_out: *mut f64,
    v_len: usize,
    p_out: *mut f64,
    p_len: usize,
) -> OpinfStatus {
    guard(|| {
        let md = model_ref(model)?;
        let mut sig = Inputs::new(signals(inputs)?);
        if !uperp.is_null() {
            sig = sig.with_uperp(Signal::by_name(&string(uperp, "uperp")?)?);
        }
        let grid = TimeGrid::new(0.0, t_end, steps)?;
        let sim = imex_euler_dae(md, &Vector::zeros(md.nv()), &sig, &grid)?;
        copy_out(slice_mut(v_out, v_len, "v_out")?, &sim.snapshots.v)?;
        if !p_out.is_null() {
            if let Some(p) = &sim.snapshots.p {
                copy_out(slice_mut(p_out, p_len, "p_out")?, p)?;
            }
        }
        Ok(())
    })
}

/// Applies the discrete Leray projector to `cols` column-major vectors of length `nv`.
///
/// # Safety
/// `x` and `y` must each hold `nv * cols` values; they may alias.
#[no_mangle]
pub unsafe extern "C" fn opinf_leray_apply(model: *const OpinfModel, x: *const f64, cols: usize, y: *mut f64) -> OpinfStatus {
    guard(|| {
        let md = model_ref(model)?;
        let proj = LerayProjector::new(md)?;
        let xm = matrix(x, md.nv(), cols, "x")?;
        let px = proj.apply_mat(&xm)?;
        copy_out(slice_mut(y, md.nv() * cols, "y")?, &px)
    })
}

/// Learns a reduced model `x' = A x + H (x (x) x) + B u` from reduced states
/// `xhat` (`r x k`), their time derivatives `xdot` (`r x k`) and inputs `u`
/// (`m x k`, may be null when `m = 0`). `quadratic = 0` drops the quadratic
/// block. `tol` is the absolute singular-value threshold of the least-squares solve.
///
/// # Safety
/// Buffers must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opinf_infer(
    xhat: *const f64,
    xdot: *const f64,
    r: usize,
    k: usize,
    u: *const f64,
    m: usize,
    quadratic: i32,
    tol: f64,
    out: *mut *mut OpinfRom,
) -> OpinfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix(xhat, r, k, "xhat")?;
        let xd = matrix(xdot, r, k, "xdot")?;
        let um = matrix(u, m, k, "u")?;
        let flags = if quadratic != 0 {
            RegressorFlags::quadratic()
        } else {
            RegressorFlags::linear()
        };
        let (rom, _) = infer_velocity_model(&x, &xd, Some(&um), None, flags, Tolerance::Absolute(tol))?;
        *out = Box::into_raw(Box::new(OpinfRom(rom)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opinf_rom_load(path: *const c_char, out: *mut *mut OpinfRom) -> OpinfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = PathBuf::from(string(path, "path")?);
        *out = Box::into_raw(Box::new(OpinfRom(io::load_rom(&p)?)));
        Ok(())
    })
}

/// # Safety
/// `rom` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn opinf_rom_save(rom: *const OpinfRom, path: *const c_char) -> OpinfStatus {
    guard(|| {
        let r = rom_ref(rom)?;
        io::save_rom(&PathBuf::from(string(path, "path")?), r)?;
        Ok(())
    })
}

/// Releases a reduced-model handle; null is ignored.
///
/// # Safety
/// `rom` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn opinf_rom_free(rom: *mut OpinfRom) {
    if !rom.is_null() {
        drop(Box::from_raw(rom));
    }
}

/// Writes the order and input dimension. Either output may be null.
///
/// # Safety
/// `rom` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn opinf_rom_dims(rom: *const OpinfRom, r: *mut usize, m: *mut usize) -> OpinfStatus {
    guard(|| {
        let rm = rom_ref(rom)?;
        if !r.is_null() {
            *r = rm.order();
        }
        if !m.is_null() {
            *m = rm.input_dim();
        }
        Ok(())
    })
}

/// Reports the shape of an operator and, when `buf` is non-null, copies it
/// column-major into `buf` (which must hold exactly `rows * cols` values).
/// An absent operator has shape `0 x 0`.
///
/// # Safety
/// `rom` must be a live handle; `rows`, `cols` and `buf` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn opinf_rom_operator(
    rom: *const OpinfRom,
    which: OpinfOperator,
    buf: *mut f64,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> OpinfStatus {
    guard(|| {
        let rm = rom_ref(rom)?;
        let vec_mat = |v: &Option<Vector>| v.as_ref().map(|v| DenseMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        let op = match which {
            OpinfOperator::A => Some(rm.a.clone()),
            OpinfOperator::H => rm.h.clone(),
            OpinfOperator::B => rm.b.clone(),
            OpinfOperator::C => vec_mat(&rm.c),
            OpinfOperator::K => vec_mat(&rm.k),
        }
        .unwrap_or_else(|| DenseMatrix::zeros(0, 0));
        if !rows.is_null() {
            *rows = op.nrows();
        }
        if !cols.is_null() {
            *cols = op.ncols();
        }
        if !buf.is_null() {
            copy_out(slice_mut(buf, len, "buf")?, &op)?;
        }
        Ok(())
    })
}

/// Integrates the reduced model with classical RK4 on `[0, t_end]` from
/// `x0`, driven by the named `inputs` (see [`opinf_model_simulate`]).
/// `out` receives `r x (steps+1)` values.
///
/// # Safety
/// `x0` must hold `r` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn opinf_rom_simulate(
    rom: *const OpinfRom,
    x0: *const f64,
    t_end: f64,
    steps: usize,
    inputs: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> OpinfStatus {
    guard(|| {
        let rm = rom_ref(rom)?;
        let sig = Inputs::new(signals(inputs)?);
        if sig.u.len() != rm.input_dim() {
            return Err(Fail(
                OpinfStatus::Dimension,
                format!("{} input signals given, the model has {} inputs", sig.u.len(), rm.input_dim()),
            ));
        }
        let x0 = Vector::from_column_slice(slice(x0, rm.order(), "x0")?);
        let grid = TimeGrid::new(0.0, t_end, steps)?;
        let traj = integrate_ode(|t, x| rm.rhs(x, &sig.u_at(t), 0.0, 0.0), &x0, &grid)?;
        copy_out(slice_mut(out, out_len, "out")?, &traj)
    })
}

/// Compact quadratic features `x_i x_j (i <= j)` of one state vector of length `r`;
/// `out` must hold `r(r+1)/2` values.
///
/// # Safety
/// `x` and `out` must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn opinf_quadratic_features(x: *const f64, r: usize, out: *mut f64, out_len: usize) -> OpinfStatus {
    guard(|| {
        let q = quadratic_vector(&Vector::from_column_slice(slice(x, r, "x")?));
        let q = DenseMatrix::from_column_slice(q.len(), 1, q.as_slice());
        copy_out(slice_mut(out, out_len, "out")?, &q)
    })
}

/// Relative time-domain L2 error between two `rows x cols` trajectories with
/// trapezoidal weights.
///
/// # Safety
/// `reference` and `candidate` must hold `rows * cols` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn opinf_error_l2(
    reference: *const f64,
    candidate: *const f64,
    rows: usize,
    cols: usize,
    dt: f64,
    out: *mut f64,
) -> OpinfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = matrix(reference, rows, cols, "reference")?;
        let b = matrix(candidate, rows, cols, "candidate")?;
        *out = experiment::error_l2(&a, &b, dt)?;
        Ok(())
    })
}
