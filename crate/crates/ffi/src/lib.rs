//! C interface. Lattices and calibration results are opaque handles owned
//! by the caller and released with the matching `_free` function. Every
//! fallible call returns a [`GclStatus`]; the message of the last failure on
//! the calling thread is available from [`gcl_last_error_message`].
//!
//! Model codes: 0 isotropic Ising, 1 anisotropic Ising, 2 autologistic.
//! Spin arrays hold `-1`/`+1` in column-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gibbs_cl::calibrate::{calibrate, BfgsConfig, CalibrationConfig, CalibrationResult};
use gibbs_cl::composite::{enumerate_blocks, log_composite_likelihood, log_pseudolikelihood};
use gibbs_cl::exact::{exact_sample, log_partition_recursive};
use gibbs_cl::model::sufficient_statistics;
use gibbs_cl::rng::stream;
use gibbs_cl::{Error, Lattice, ModelSpec};

pub const GCL_MODEL_ISING_ISOTROPIC: u32 = 0;
pub const GCL_MODEL_ISING_ANISOTROPIC: u32 = 1;
pub const GCL_MODEL_AUTOLOGISTIC: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GclStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    BufferTooSmall = 4,
    Numerical = 5,
    NoConvergence = 6,
    Panic = 7,
}

/// Observed lattice.
pub struct GclLattice(Lattice);

/// Modes, weights and curvature matrix of one calibration.
pub struct GclCalibration(CalibrationResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GclStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::WeightCountMismatch { .. } => GclStatus::DimensionMismatch,
        Error::NoConvergence { .. } | Error::LineSearch(_) => GclStatus::NoConvergence,
        Error::Singular(_) | Error::NotNegativeDefinite(_) | Error::Degenerate(_) | Error::NonPositiveWeight { .. } => {
            GclStatus::Numerical
        }
        _ => GclStatus::InvalidArgument,
    }
}

struct Failure(GclStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GclStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GclStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GclStatus::Ok,
        Ok(Err(Failure(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            GclStatus::Panic
        }
    }
}

fn model(code: u32) -> Result<ModelSpec, Failure> {
    ModelSpec::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Failure(GclStatus::InvalidArgument, format!("unknown model code {code}")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Failure(GclStatus::BufferTooSmall, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn lattice_of<'a>(p: *const GclLattice) -> Result<&'a Lattice, Failure> {
    p.as_ref().map(|l| &l.0).ok_or_else(|| null("lattice"))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gcl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gcl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows × cols` spins into a new lattice.
///
/// # Safety
/// `values` must point to `rows × cols` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_lattice_new(rows: usize, cols: usize, values: *const i8, out: *mut *mut GclLattice) -> GclStatus {
    guard(|| {
        let v = slice(values, rows.saturating_mul(cols), "values")?;
        let l = Lattice::new(rows, cols, v.to_vec())?;
        write(out, Box::into_raw(Box::new(GclLattice(l))), "out")
    })
}

/// Exact draw from the model.
///
/// # Safety
/// `theta` must hold `theta_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_lattice_simulate(
    model_code: u32,
    theta: *const f64,
    theta_len: usize,
    rows: usize,
    cols: usize,
    seed: u64,
    out: *mut *mut GclLattice,
) -> GclStatus {
    guard(|| {
        let t = slice(theta, theta_len, "theta")?;
        let l = exact_sample(t, model(model_code)?, rows, cols, &mut stream(seed, &[]))?;
        write(out, Box::into_raw(Box::new(GclLattice(l))), "out")
    })
}

/// # Safety
/// `lattice` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gcl_lattice_free(lattice: *mut GclLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Row count, 0 for a null handle.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcl_lattice_rows(lattice: *const GclLattice) -> usize {
    lattice.as_ref().map_or(0, |l| l.0.rows())
}

/// Column count, 0 for a null handle.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcl_lattice_cols(lattice: *const GclLattice) -> usize {
    lattice.as_ref().map_or(0, |l| l.0.cols())
}

/// Copies the spins, column-major, into `buf`.
///
/// # Safety
/// `buf` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gcl_lattice_values(lattice: *const GclLattice, buf: *mut i8, len: usize) -> GclStatus {
    guard(|| {
        let l = lattice_of(lattice)?;
        out_slice(buf, len, l.len(), "buf")?.copy_from_slice(l.values());
        Ok(())
    })
}

/// Sufficient statistics of the lattice under the model.
///
/// # Safety
/// `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn gcl_sufficient_statistics(
    lattice: *const GclLattice,
    model_code: u32,
    out: *mut f64,
    len: usize,
) -> GclStatus {
    guard(|| {
        let m = model(model_code)?;
        let s = sufficient_statistics(lattice_of(lattice)?, m).as_f64();
        out_slice(out, len, s.len(), "out")?.copy_from_slice(&s);
        Ok(())
    })
}

/// Exact `log z(θ)` of a `rows × cols` lattice.
///
/// # Safety
/// `theta` must hold `theta_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_log_partition(
    model_code: u32,
    theta: *const f64,
    theta_len: usize,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> GclStatus {
    guard(|| {
        let v = log_partition_recursive(slice(theta, theta_len, "theta")?, model(model_code)?, rows, cols)?;
        write(out, v, "out")
    })
}

/// Log pseudolikelihood.
///
/// # Safety
/// `theta` must hold `theta_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_log_pseudolikelihood(
    lattice: *const GclLattice,
    model_code: u32,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> GclStatus {
    guard(|| {
        let v = log_pseudolikelihood(lattice_of(lattice)?, slice(theta, theta_len, "theta")?, model(model_code)?)?;
        write(out, v, "out")
    })
}

/// Composite log-likelihood over every `block_side × block_side` block,
/// each with weight `weight`.
///
/// # Safety
/// `theta` must hold `theta_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_log_composite_likelihood(
    lattice: *const GclLattice,
    model_code: u32,
    block_side: usize,
    theta: *const f64,
    theta_len: usize,
    weight: f64,
    out: *mut f64,
) -> GclStatus {
    guard(|| {
        let y = lattice_of(lattice)?;
        let blocks = enumerate_blocks(y.rows(), y.cols(), block_side)?;
        let w = vec![weight; blocks.len()];
        let v = log_composite_likelihood(y, slice(theta, theta_len, "theta")?, model(model_code)?, &blocks, &w)?;
        write(out, v, "out")
    })
}

/// Estimates both modes, the magnitude weights and the curvature matrix.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibrate(
    lattice: *const GclLattice,
    model_code: u32,
    block_side: usize,
    gradient_draws: usize,
    covariance_draws: usize,
    seed: u64,
    out: *mut *mut GclCalibration,
) -> GclStatus {
    guard(|| {
        let y = lattice_of(lattice)?;
        let config = CalibrationConfig {
            block_side,
            covariance_draws,
            bfgs: BfgsConfig { gradient_draws, ..BfgsConfig::default() },
            prior: None,
        };
        let r = calibrate(y, model(model_code)?, &config, seed)?;
        write(out, Box::into_raw(Box::new(GclCalibration(r))), "out")
    })
}

/// # Safety
/// `calibration` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibration_free(calibration: *mut GclCalibration) {
    if !calibration.is_null() {
        drop(Box::from_raw(calibration));
    }
}

unsafe fn calibration_of<'a>(p: *const GclCalibration) -> Result<&'a CalibrationResult, Failure> {
    p.as_ref().map(|c| &c.0).ok_or_else(|| null("calibration"))
}

/// Parameter dimension, 0 for a null handle.
///
/// # Safety
/// `calibration` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibration_dim(calibration: *const GclCalibration) -> usize {
    calibration.as_ref().map_or(0, |c| c.0.model.dim())
}

/// Full-posterior mode `θ*` and composite mode `θ*_CL`.
///
/// # Safety
/// Both buffers must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibration_modes(
    calibration: *const GclCalibration,
    theta_star: *mut f64,
    theta_cl: *mut f64,
    len: usize,
) -> GclStatus {
    guard(|| {
        let c = calibration_of(calibration)?;
        let d = c.model.dim();
        out_slice(theta_star, len, d, "theta_star")?.copy_from_slice(&c.maps.theta);
        out_slice(theta_cl, len, d, "theta_cl")?.copy_from_slice(&c.maps.theta_cl);
        Ok(())
    })
}

/// Magnitude weight for option 1 to 5, or 0 for the scalar weight of
/// one-parameter models.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibration_weight(calibration: *const GclCalibration, option: u8, out: *mut f64) -> GclStatus {
    guard(|| {
        let c = calibration_of(calibration)?;
        let w = c.weight(option).ok_or_else(|| Failure(GclStatus::InvalidArgument, format!("no weight for option {option}")))?;
        write(out, w, "out")
    })
}

/// Curvature matrix `W`, row-major `d × d`.
///
/// # Safety
/// `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibration_curvature(calibration: *const GclCalibration, out: *mut f64, len: usize) -> GclStatus {
    guard(|| {
        let c = calibration_of(calibration)?;
        let w = c.curvature.as_ref().ok_or_else(|| {
            Failure(GclStatus::Numerical, c.curvature_error.clone().unwrap_or_else(|| "no curvature matrix".into()))
        })?;
        let d = c.model.dim();
        let row_major: Vec<f64> = w.w.transpose().as_slice().to_vec();
        out_slice(out, len, d * d, "out")?.copy_from_slice(&row_major);
        Ok(())
    })
}

/// JSON report; release with [`gcl_string_free`]. Null on failure.
///
/// # Safety
/// `calibration` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcl_calibration_to_json(calibration: *const GclCalibration) -> *mut c_char {
    let mut s = ptr::null_mut();
    let status = guard(|| {
        let json = calibration_of(calibration)?.to_json()?;
        s = CString::new(json).map_err(|e| Failure(GclStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    });
    if status == GclStatus::Ok {
        s
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gcl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
