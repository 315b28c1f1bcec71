//! C bindings for the moch spectral laboratory.
//!
//! Every constructor hands back an opaque handle that must be released
//! with the matching `_free` function. Fallible calls return a
//! `MochStatus`; on any non-`Ok` status the thread-local message
//! retrieved by [`moch_last_error`] describes the failure. All handles
//! are plain immutable data once built, so they may be shared across
//! threads freely; the error message is per-thread.
#![warn(unsafe_op_in_unsafe_fn)]

use moch::besov::norm_profile;
use moch::dynamics::{solve, MochParams};
use moch::init::{auto_grid_size, build_gamma0, CorrectorMode};
use moch::{DyadicPartition, Grid, MochError, RealField};
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

/// Status codes shared by every fallible binding; numerically identical
/// to the command-line tool's exit codes for the same failure classes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MochStatus {
    /// Success.
    Ok = 0,
    /// Malformed configuration or argument combination.
    Config = 2,
    /// Structurally invalid input (grid size, mismatched grids, ranges).
    Invalid = 3,
    /// File-system or snapshot-format failure.
    Io = 4,
    /// Numerical failure: non-finite values, blow-up, lost invertibility.
    Numerical = 5,
}

/// Opaque periodic grid handle.
pub struct MochGrid(Arc<Grid>);

/// Opaque dyadic-partition handle; retains its grid internally.
pub struct MochPartition(DyadicPartition);

/// Opaque real field handle.
pub struct MochField(RealField);

/// The three datum norms reported by [`moch_datum_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MochDatumNorms {
    /// Summed block sup norms.
    pub sum_norm: f64,
    /// `(j + 2)^2`-weighted block sup.
    pub weighted_norm: f64,
    /// Summed block sup norms of the squared datum.
    pub square_norm: f64,
}

/// Outcome summary of [`moch_solve_final`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MochSolveInfo {
    /// Time actually reached (equals the horizon unless truncated).
    pub t_final: f64,
    /// 1 when the blow-up guard stopped the run early, else 0.
    pub truncated: i32,
    /// Summed block norm of the final state.
    pub final_sum_norm: f64,
    /// Sup norm of the final state.
    pub final_linf: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &MochError) -> MochStatus {
    match err.exit_code() {
        2 => MochStatus::Config,
        3 => MochStatus::Invalid,
        4 => MochStatus::Io,
        _ => MochStatus::Numerical,
    }
}

fn fail(err: MochError) -> MochStatus {
    set_last_error(&err.to_string());
    status_of(&err)
}

fn invalid(msg: &str) -> MochStatus {
    set_last_error(msg);
    MochStatus::Invalid
}

/// Run `body`, translating errors and panics into a status code.
fn guarded(body: impl FnOnce() -> Result<(), MochError>) -> MochStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            MochStatus::Ok
        }
        Ok(Err(err)) => fail(err),
        Err(_) => {
            set_last_error("internal panic in moch");
            MochStatus::Numerical
        }
    }
}

/// Copy the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes (excluding the NUL), regardless of truncation. `buf`
/// may be null when `len` is 0, to query the length alone.
#[no_mangle]
pub extern "C" fn moch_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let copy = bytes.len().min(len - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, copy);
                *buf.add(copy) = 0;
            }
        }
        bytes.len()
    })
}

/// Build a periodic grid with `num_points` nodes (a power of two, at
/// least 8) over `[0, period)`.
#[no_mangle]
pub extern "C" fn moch_grid_new(
    num_points: usize,
    period: f64,
    out: *mut *mut MochGrid,
) -> MochStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    guarded(|| {
        let grid = Grid::new(num_points, period)?;
        unsafe { *out = Box::into_raw(Box::new(MochGrid(grid))) };
        Ok(())
    })
}

/// Number of nodes of a grid handle; 0 for a null handle.
#[no_mangle]
pub extern "C" fn moch_grid_points(grid: *const MochGrid) -> usize {
    if grid.is_null() {
        return 0;
    }
    unsafe { &*grid }.0.num_points()
}

/// Release a grid handle; accepts null.
#[no_mangle]
pub extern "C" fn moch_grid_free(grid: *mut MochGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// Build the dyadic frequency partition for `grid`.
#[no_mangle]
pub extern "C" fn moch_partition_new(
    grid: *const MochGrid,
    out: *mut *mut MochPartition,
) -> MochStatus {
    if grid.is_null() || out.is_null() {
        return invalid("grid or out pointer is null");
    }
    guarded(|| {
        let grid = unsafe { &*grid };
        let part = DyadicPartition::new(&grid.0)?;
        unsafe { *out = Box::into_raw(Box::new(MochPartition(part))) };
        Ok(())
    })
}

/// Number of blocks of a partition handle (the low-frequency block plus
/// one per dyadic annulus); 0 for a null handle.
#[no_mangle]
pub extern "C" fn moch_partition_num_blocks(part: *const MochPartition) -> usize {
    if part.is_null() {
        return 0;
    }
    unsafe { &*part }.0.num_blocks()
}

/// Release a partition handle; accepts null.
#[no_mangle]
pub extern "C" fn moch_partition_free(part: *mut MochPartition) {
    if !part.is_null() {
        drop(unsafe { Box::from_raw(part) });
    }
}

/// Build a field on `grid` from `len` node samples; `len` must equal the
/// grid's point count and every sample must be finite.
#[no_mangle]
pub extern "C" fn moch_field_from_samples(
    grid: *const MochGrid,
    samples: *const f64,
    len: usize,
    out: *mut *mut MochField,
) -> MochStatus {
    if grid.is_null() || samples.is_null() || out.is_null() {
        return invalid("grid, samples, or out pointer is null");
    }
    guarded(|| {
        let grid = unsafe { &*grid };
        let data = unsafe { std::slice::from_raw_parts(samples, len) }.to_vec();
        let field = RealField::from_samples(&grid.0, data)?;
        unsafe { *out = Box::into_raw(Box::new(MochField(field))) };
        Ok(())
    })
}

/// Number of samples of a field handle; 0 for a null handle.
#[no_mangle]
pub extern "C" fn moch_field_len(field: *const MochField) -> usize {
    if field.is_null() {
        return 0;
    }
    unsafe { &*field }.0.len()
}

/// Copy a field's node samples into `buf` (capacity `len`); fails unless
/// `len` is at least the field length.
#[no_mangle]
pub extern "C" fn moch_field_samples(
    field: *const MochField,
    buf: *mut f64,
    len: usize,
) -> MochStatus {
    if field.is_null() || buf.is_null() {
        return invalid("field or buf pointer is null");
    }
    let samples = unsafe { &*field }.0.samples();
    if len < samples.len() {
        return invalid("buffer is smaller than the field");
    }
    unsafe { std::ptr::copy_nonoverlapping(samples.as_ptr(), buf, samples.len()) };
    set_last_error("");
    MochStatus::Ok
}

/// Sup norm of a field; NaN for a null handle.
#[no_mangle]
pub extern "C" fn moch_field_linf(field: *const MochField) -> f64 {
    if field.is_null() {
        return f64::NAN;
    }
    unsafe { &*field }.0.linf()
}

/// Release a field handle; accepts null.
#[no_mangle]
pub extern "C" fn moch_field_free(field: *mut MochField) {
    if !field.is_null() {
        drop(unsafe { Box::from_raw(field) });
    }
}

/// Write a field to `path` in the binary snapshot format.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn moch_snapshot_write(
    field: *const MochField,
    path: *const c_char,
) -> MochStatus {
    if field.is_null() || path.is_null() {
        return invalid("field or path pointer is null");
    }
    guarded(|| {
        let path = path_from_c(path)?;
        moch::io::write_snapshot(&path, &unsafe { &*field }.0)
    })
}

/// Read a snapshot file into a fresh field handle.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn moch_snapshot_read(
    path: *const c_char,
    out: *mut *mut MochField,
) -> MochStatus {
    if path.is_null() || out.is_null() {
        return invalid("path or out pointer is null");
    }
    guarded(|| {
        let path = path_from_c(path)?;
        let field = moch::io::read_snapshot(&path)?;
        unsafe { *out = Box::into_raw(Box::new(MochField(field))) };
        Ok(())
    })
}

fn path_from_c(path: *const c_char) -> Result<PathBuf, MochError> {
    let cstr = unsafe { std::ffi::CStr::from_ptr(path) };
    let s = cstr
        .to_str()
        .map_err(|_| MochError::invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// Summed block sup norm of `field` under `part`; the field must live on
/// the partition's grid.
#[no_mangle]
pub extern "C" fn moch_norm_sum(
    part: *const MochPartition,
    field: *const MochField,
    out: *mut f64,
) -> MochStatus {
    norm_impl(part, field, out, |p| p.total())
}

/// `(j + 2)^2`-weighted block sup norm of `field` under `part`.
#[no_mangle]
pub extern "C" fn moch_norm_weighted(
    part: *const MochPartition,
    field: *const MochField,
    out: *mut f64,
) -> MochStatus {
    norm_impl(part, field, out, |p| p.weighted_sup().value)
}

fn norm_impl(
    part: *const MochPartition,
    field: *const MochField,
    out: *mut f64,
    pick: impl Fn(&moch::NormProfile) -> f64,
) -> MochStatus {
    if part.is_null() || field.is_null() || out.is_null() {
        return invalid("partition, field, or out pointer is null");
    }
    guarded(|| {
        let profile = norm_profile(&unsafe { &*part }.0, &unsafe { &*field }.0)?;
        unsafe { *out = pick(&profile) };
        Ok(())
    })
}

/// Build the rough initial datum at `scale` on its automatically sized
/// grid (`corrector_literal` 0 uses the regular smoothing corrector, any
/// other value the literal variant), returning the field and its three
/// norms. The field carries its own grid; free it with
/// [`moch_field_free`].
#[no_mangle]
pub extern "C" fn moch_datum_new(
    scale: i32,
    corrector_literal: i32,
    out: *mut *mut MochField,
    norms: *mut MochDatumNorms,
) -> MochStatus {
    if out.is_null() {
        return invalid("out pointer is null");
    }
    guarded(|| {
        let grid = Grid::new(auto_grid_size(scale), 2.0 * std::f64::consts::PI)?;
        let part = DyadicPartition::new(&grid)?;
        let mode = if corrector_literal == 0 {
            CorrectorMode::Regular
        } else {
            CorrectorMode::Literal
        };
        let datum = build_gamma0(&part, scale, mode)?;
        if !norms.is_null() {
            unsafe {
                *norms = MochDatumNorms {
                    sum_norm: datum.norms.b0_inf_1,
                    weighted_norm: datum.norms.weighted,
                    square_norm: datum.norms.square_b0_inf_1,
                };
            }
        }
        unsafe { *out = Box::into_raw(Box::new(MochField(datum.gamma0))) };
        Ok(())
    })
}

/// Integrate `gamma0` to `t_final` and hand back the final field plus a
/// summary. `dealias` 0 disables the 2/3-rule product dealiasing. The
/// blow-up guard truncates instead of failing; `info.truncated` reports
/// it.
#[no_mangle]
pub extern "C" fn moch_solve_final(
    gamma0: *const MochField,
    lambda: f64,
    dt: f64,
    t_final: f64,
    dealias: i32,
    out: *mut *mut MochField,
    info: *mut MochSolveInfo,
) -> MochStatus {
    if gamma0.is_null() || out.is_null() {
        return invalid("gamma0 or out pointer is null");
    }
    guarded(|| {
        let gamma0 = &unsafe { &*gamma0 }.0;
        let part = DyadicPartition::new(gamma0.grid())?;
        let mut params = MochParams::new(lambda, dt, t_final)?;
        params.dealias_on = dealias != 0;
        let steps = (t_final / dt).round().max(1.0) as usize;
        params.record_every = steps.max(1);
        let traj = solve(gamma0, &part, &params)?;
        let last = traj
            .norm_series
            .last()
            .expect("solve records at least one row");
        let final_state = traj.final_state();
        if !info.is_null() {
            unsafe {
                *info = MochSolveInfo {
                    t_final: final_state.t,
                    truncated: i32::from(traj.truncated),
                    final_sum_norm: last.b0_inf_1,
                    final_linf: last.linf,
                };
            }
        }
        unsafe { *out = Box::into_raw(Box::new(MochField(final_state.gamma))) };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error_string() -> String {
        let needed = moch_last_error(std::ptr::null_mut(), 0);
        let mut buf = vec![0 as c_char; needed + 1];
        moch_last_error(buf.as_mut_ptr(), buf.len());
        let bytes: Vec<u8> = buf[..needed].iter().map(|&b| b as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn error_message_roundtrip() {
        set_last_error("something went wrong");
        assert_eq!(last_error_string(), "something went wrong");
        let mut tiny = [0 as c_char; 6];
        let needed = moch_last_error(tiny.as_mut_ptr(), tiny.len());
        assert_eq!(needed, "something went wrong".len());
        assert_eq!(tiny[5], 0);
    }

    #[test]
    fn status_codes_mirror_error_classes() {
        assert_eq!(status_of(&MochError::Config("x".into())) as i32, 2);
        assert_eq!(status_of(&MochError::invalid("x")) as i32, 3);
        assert_eq!(status_of(&MochError::BadSnapshot("x".into())) as i32, 4);
        assert_eq!(
            status_of(&MochError::BlowUp {
                t: 0.0,
                max_abs: 1.0
            }) as i32,
            5
        );
    }
}
