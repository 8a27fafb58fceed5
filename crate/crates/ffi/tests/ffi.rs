use std::ffi::CStr;
use std::ptr;

use gibbs_cl_ffi::*;

fn last_error() -> String {
    let p = gcl_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lattice_round_trip_and_statistics() {
    let spins: [i8; 6] = [1, -1, 1, 1, 1, -1];
    let mut lat = ptr::null_mut();
    unsafe {
        assert_eq!(gcl_lattice_new(2, 3, spins.as_ptr(), &mut lat), GclStatus::Ok);
        assert_eq!((gcl_lattice_rows(lat), gcl_lattice_cols(lat)), (2, 3));
        let mut back = [0i8; 6];
        assert_eq!(gcl_lattice_values(lat, back.as_mut_ptr(), 6), GclStatus::Ok);
        assert_eq!(back, spins);
        let mut small = [0i8; 2];
        assert_eq!(gcl_lattice_values(lat, small.as_mut_ptr(), 2), GclStatus::BufferTooSmall);
        // column-major: columns (1,-1), (1,1), (1,-1)
        // vertical pairs: -1, 1, -1; horizontal pairs: 1, -1, 1, -1
        let mut s = [0.0; 2];
        assert_eq!(gcl_sufficient_statistics(lat, GCL_MODEL_ISING_ANISOTROPIC, s.as_mut_ptr(), 2), GclStatus::Ok);
        assert_eq!(s, [-1.0, 0.0]);
        gcl_lattice_free(lat);
    }
}

#[test]
fn likelihoods() {
    let mut z = 0.0;
    let theta = [0.3];
    unsafe {
        assert_eq!(gcl_log_partition(GCL_MODEL_ISING_ISOTROPIC, theta.as_ptr(), 1, 1, 2, &mut z), GclStatus::Ok);
    }
    assert!((z - (2.0 * 0.3f64.exp() + 2.0 * (-0.3f64).exp()).ln()).abs() < 1e-12);

    let mut lat = ptr::null_mut();
    unsafe {
        assert_eq!(gcl_lattice_simulate(GCL_MODEL_ISING_ISOTROPIC, theta.as_ptr(), 1, 4, 4, 7, &mut lat), GclStatus::Ok);
        let (mut pl, mut cl) = (0.0, 0.0);
        assert_eq!(gcl_log_pseudolikelihood(lat, GCL_MODEL_ISING_ISOTROPIC, theta.as_ptr(), 1, &mut pl), GclStatus::Ok);
        assert_eq!(gcl_log_composite_likelihood(lat, GCL_MODEL_ISING_ISOTROPIC, 1, theta.as_ptr(), 1, 1.0, &mut cl), GclStatus::Ok);
        assert!((pl - cl).abs() < 1e-12);
        gcl_lattice_free(lat);
    }
}

#[test]
fn errors_are_reported() {
    let theta = [0.3, 0.1];
    let mut z = 0.0;
    unsafe {
        assert_eq!(gcl_log_partition(9, theta.as_ptr(), 2, 2, 2, &mut z), GclStatus::InvalidArgument);
        assert!(last_error().contains("model code"));
        assert_eq!(gcl_log_partition(GCL_MODEL_ISING_ISOTROPIC, theta.as_ptr(), 2, 2, 2, &mut z), GclStatus::DimensionMismatch);
        assert_eq!(gcl_log_partition(GCL_MODEL_ISING_ISOTROPIC, ptr::null(), 1, 2, 2, &mut z), GclStatus::NullPointer);
        let bad: [i8; 4] = [1, 0, 1, 1];
        let mut lat = ptr::null_mut();
        assert_eq!(gcl_lattice_new(2, 2, bad.as_ptr(), &mut lat), GclStatus::InvalidArgument);
        assert!(lat.is_null());
        assert!(last_error().contains("spin"));
        assert_eq!(gcl_lattice_rows(ptr::null()), 0);
        gcl_lattice_free(ptr::null_mut());
    }
}

#[test]
fn calibration_handle() {
    let theta = [0.0, 0.3];
    let mut lat = ptr::null_mut();
    let mut cal = ptr::null_mut();
    unsafe {
        assert_eq!(gcl_lattice_simulate(GCL_MODEL_AUTOLOGISTIC, theta.as_ptr(), 2, 8, 8, 3, &mut lat), GclStatus::Ok);
        assert_eq!(gcl_calibrate(lat, GCL_MODEL_AUTOLOGISTIC, 2, 100, 2000, 5, &mut cal), GclStatus::Ok);
        assert_eq!(gcl_calibration_dim(cal), 2);
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        assert_eq!(gcl_calibration_modes(cal, a.as_mut_ptr(), b.as_mut_ptr(), 2), GclStatus::Ok);
        assert!(a.iter().chain(&b).all(|v| v.abs() < 1.0));
        let mut w = 0.0;
        assert_eq!(gcl_calibration_weight(cal, 3, &mut w), GclStatus::Ok);
        assert!(w > 0.0);
        assert_eq!(gcl_calibration_weight(cal, 0, &mut w), GclStatus::InvalidArgument);
        let mut m = [0.0; 4];
        assert_eq!(gcl_calibration_curvature(cal, m.as_mut_ptr(), 4), GclStatus::Ok);
        assert_eq!(m[2], 0.0);
        let json = gcl_calibration_to_json(cal);
        assert!(CStr::from_ptr(json).to_str().unwrap().contains("theta_cl"));
        gcl_string_free(json);
        gcl_calibration_free(cal);
        gcl_lattice_free(lat);
    }
}

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gibbs_cl.h")).unwrap();
    for name in ["gcl_lattice_new", "gcl_calibrate", "gcl_last_error_message", "GCL_STATUS_OK", "GclLattice", "GCL_MODEL_AUTOLOGISTIC"] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
