//! End-to-end exercises of the C bindings: handle lifecycles, norm
//! queries, datum construction, a short integration, snapshot
//! round-trips, and the error-reporting contract.

use moch_ffi::*;
use std::ffi::{c_char, CString};
use std::ptr;

fn last_error() -> String {
    let needed = moch_last_error(ptr::null_mut(), 0);
    let mut buf = vec![0 as c_char; needed + 1];
    moch_last_error(buf.as_mut_ptr(), buf.len());
    String::from_utf8(buf[..needed].iter().map(|&b| b as u8).collect()).unwrap()
}

#[test]
fn grid_partition_field_roundtrip() {
    let mut grid: *mut MochGrid = ptr::null_mut();
    assert_eq!(
        moch_grid_new(256, 2.0 * std::f64::consts::PI, &mut grid) as i32,
        0
    );
    assert_eq!(moch_grid_points(grid), 256);

    let mut part: *mut MochPartition = ptr::null_mut();
    assert_eq!(moch_partition_new(grid, &mut part) as i32, 0);
    assert!(moch_partition_num_blocks(part) >= 4);

    let samples: Vec<f64> = (0..256)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / 256.0;
            x.sin() + 0.25 * (3.0 * x).cos()
        })
        .collect();
    let mut field: *mut MochField = ptr::null_mut();
    assert_eq!(
        moch_field_from_samples(grid, samples.as_ptr(), samples.len(), &mut field) as i32,
        0
    );
    assert_eq!(moch_field_len(field), 256);

    let mut back = vec![0.0f64; 256];
    assert_eq!(moch_field_samples(field, back.as_mut_ptr(), back.len()) as i32, 0);
    assert_eq!(back, samples);

    let linf = moch_field_linf(field);
    let expected = samples.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    assert!((linf - expected).abs() < 1e-15);

    let mut sum = 0.0;
    let mut weighted = 0.0;
    assert_eq!(moch_norm_sum(part, field, &mut sum) as i32, 0);
    assert_eq!(moch_norm_weighted(part, field, &mut weighted) as i32, 0);
    assert!(sum >= linf && sum.is_finite());
    assert!(weighted > 0.0 && weighted.is_finite());

    moch_field_free(field);
    moch_partition_free(part);
    moch_grid_free(grid);
}

#[test]
fn datum_solve_and_snapshot() {
    let mut datum: *mut MochField = ptr::null_mut();
    let mut norms = MochDatumNorms::default();
    assert_eq!(moch_datum_new(4, 0, &mut datum, &mut norms) as i32, 0);
    assert!(norms.sum_norm > 0.0);
    assert!(norms.weighted_norm > norms.sum_norm);
    assert!(norms.square_norm > 0.0);
    assert_eq!(moch_field_len(datum), 4096);

    let mut final_field: *mut MochField = ptr::null_mut();
    let mut info = MochSolveInfo::default();
    assert_eq!(
        moch_solve_final(datum, 1.0, 1e-3, 0.05, 1, &mut final_field, &mut info) as i32,
        0
    );
    assert_eq!(info.truncated, 0);
    assert!((info.t_final - 0.05).abs() < 1e-12);
    assert!(info.final_sum_norm.is_finite() && info.final_sum_norm > 0.0);
    assert!(info.final_linf <= info.final_sum_norm * (1.0 + 1e-12));

    let dir = std::env::temp_dir().join("moch_ffi_capi_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("final.snap");
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(moch_snapshot_write(final_field, c_path.as_ptr()) as i32, 0);
        let mut reread: *mut MochField = ptr::null_mut();
        assert_eq!(moch_snapshot_read(c_path.as_ptr(), &mut reread) as i32, 0);
        let n = moch_field_len(reread);
        assert_eq!(n, moch_field_len(final_field));
        let mut a = vec![0.0f64; n];
        let mut b = vec![0.0f64; n];
        assert_eq!(moch_field_samples(final_field, a.as_mut_ptr(), n) as i32, 0);
        assert_eq!(moch_field_samples(reread, b.as_mut_ptr(), n) as i32, 0);
        assert_eq!(a, b);
        moch_field_free(reread);
    }
    std::fs::remove_file(&path).ok();

    moch_field_free(final_field);
    moch_field_free(datum);
}

#[test]
fn error_paths_set_messages_and_codes() {
    let mut grid: *mut MochGrid = ptr::null_mut();
    let status = moch_grid_new(100, 1.0, &mut grid);
    assert_eq!(status as i32, 3);
    assert!(last_error().contains("power of two"));
    assert!(grid.is_null());

    let status = moch_grid_new(64, 1.0, ptr::null_mut());
    assert_eq!(status as i32, 3);
    assert!(last_error().contains("null"));

    let missing = CString::new("/nonexistent/dir/file.snap").unwrap();
    let mut field: *mut MochField = ptr::null_mut();
    let status = unsafe { moch_snapshot_read(missing.as_ptr(), &mut field) };
    assert_eq!(status as i32, 4);
    assert!(field.is_null());

    // A successful call clears the sticky message.
    assert_eq!(moch_grid_new(64, 1.0, &mut grid) as i32, 0);
    assert!(last_error().is_empty());

    // Grid mismatch between a partition and a field is rejected.
    let mut part: *mut MochPartition = ptr::null_mut();
    assert_eq!(moch_partition_new(grid, &mut part) as i32, 0);
    let mut other: *mut MochGrid = ptr::null_mut();
    assert_eq!(moch_grid_new(128, 1.0, &mut other) as i32, 0);
    let samples = vec![0.5f64; 128];
    let mut field: *mut MochField = ptr::null_mut();
    assert_eq!(
        moch_field_from_samples(other, samples.as_ptr(), 128, &mut field) as i32,
        0
    );
    let mut out = 0.0;
    assert_eq!(moch_norm_sum(part, field, &mut out) as i32, 3);
    assert!(last_error().contains("incompatible"));

    // Free functions tolerate null.
    moch_field_free(ptr::null_mut());
    moch_partition_free(ptr::null_mut());
    moch_grid_free(ptr::null_mut());

    moch_field_free(field);
    moch_grid_free(other);
    moch_partition_free(part);
    moch_grid_free(grid);
}

#[test]
fn nonfinite_samples_are_numerical_errors() {
    let mut grid: *mut MochGrid = ptr::null_mut();
    assert_eq!(moch_grid_new(64, 1.0, &mut grid) as i32, 0);
    let mut samples = vec![0.0f64; 64];
    samples[10] = f64::NAN;
    let mut field: *mut MochField = ptr::null_mut();
    let status = moch_field_from_samples(grid, samples.as_ptr(), 64, &mut field);
    assert_eq!(status as i32, 5);
    assert!(field.is_null());
    moch_grid_free(grid);
}
