use std::ffi::CStr;
use std::ptr;

use smc_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(smc_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

unsafe fn matrix(rows: usize, cols: usize, data: &[f64]) -> *mut SmcMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(smc_matrix_new(rows, cols, data.as_ptr(), &mut m), SmcStatus::Ok);
    m
}

#[test]
fn matrix_round_trip() {
    unsafe {
        let m = matrix(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(smc_matrix_rows(m), 2);
        assert_eq!(smc_matrix_cols(m), 3);
        let mut buf = [0.0; 6];
        assert_eq!(smc_matrix_copy_data(m, buf.as_mut_ptr(), 6), SmcStatus::Ok);
        assert_eq!(buf, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            smc_matrix_copy_data(m, buf.as_mut_ptr(), 5),
            SmcStatus::DimensionMismatch
        );
        assert!(!last_error().is_empty());
        smc_matrix_free(m);

        let mut z = ptr::null_mut();
        assert_eq!(smc_matrix_new(2, 2, ptr::null(), &mut z), SmcStatus::Ok);
        let mut buf = [1.0; 4];
        smc_matrix_copy_data(z, buf.as_mut_ptr(), 4);
        assert_eq!(buf, [0.0; 4]);
        smc_matrix_free(z);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = [1.0, f64::NAN];
        assert_eq!(smc_matrix_new(1, 2, bad.as_ptr(), &mut m), SmcStatus::NonFinite);
        assert!(m.is_null());
        assert_eq!(smc_matrix_new(1, 1, [1.0].as_ptr(), ptr::null_mut()), SmcStatus::NullPointer);

        let mut v = 0.0;
        assert_eq!(smc_degrees_of_freedom_ratio(3, 3, 4, 5, &mut v), SmcStatus::InvalidParameter);
        assert!(last_error().contains("rank"));
        assert_eq!(smc_degrees_of_freedom_ratio(100, 100, 20, 9000, &mut v), SmcStatus::Ok);
        assert_eq!(v, 0.4);
        assert!(last_error().is_empty());

        let z = matrix(2, 2, &[0.0; 4]);
        let mut out = ptr::null_mut();
        assert_eq!(smc_normalize_spectral(z, &mut out), SmcStatus::InvalidParameter);
        assert_eq!(smc_normalize_spectral(ptr::null(), &mut out), SmcStatus::NullPointer);
        smc_matrix_free(z);
        smc_matrix_free(ptr::null_mut());
        smc_mask_free(ptr::null_mut());
        smc_result_free(ptr::null_mut());
    }
}

#[test]
fn mask_flags_round_trip() {
    unsafe {
        let flags = [1u8, 0, 2, 0, 0, 1];
        let mut mask = ptr::null_mut();
        assert_eq!(smc_mask_new(2, 3, flags.as_ptr(), &mut mask), SmcStatus::Ok);
        assert_eq!(smc_mask_observed_count(mask), 3);
        let mut out = [9u8; 6];
        assert_eq!(smc_mask_copy_flags(mask, out.as_mut_ptr(), 6), SmcStatus::Ok);
        assert_eq!(out, [1, 0, 1, 0, 0, 1]);
        smc_mask_free(mask);
    }
}

#[test]
fn generate_sample_solve_pipeline() {
    unsafe {
        let mut raw = ptr::null_mut();
        assert_eq!(smc_generate(20, 20, 2, 0.7, 0.5, 3, &mut raw), SmcStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(smc_normalize_spectral(raw, &mut m), SmcStatus::Ok);
        let mut mask = ptr::null_mut();
        assert_eq!(smc_structured_sample(m, 0.3, 0.9, 5, &mut mask), SmcStatus::Ok);
        assert!(smc_mask_observed_count(mask) < 400);

        let mut opts = smc_solver_options_default();
        opts.rank = 2;
        for solver in [SmcSolver::Sirls, SmcSolver::StructuredSirls] {
            let mut res = ptr::null_mut();
            assert_eq!(smc_solve(solver, m, mask, &opts, &mut res), SmcStatus::Ok, "{}", last_error());
            let x = smc_result_matrix(res);
            assert_eq!(smc_matrix_rows(x), 20);
            assert!(smc_result_iterations(res) >= 1);
            let mut err = f64::NAN;
            assert_eq!(smc_relative_error(m, x, &mut err), SmcStatus::Ok);
            assert!(err.is_finite() && err < 1.0, "{err}");
            smc_result_free(res);
        }

        let mut noisy = ptr::null_mut();
        assert_eq!(smc_add_noise(m, mask, 1e-3, 1, &mut noisy), SmcStatus::Ok);
        let mut err = 0.0;
        smc_relative_error(m, noisy, &mut err);
        assert!(err > 0.0 && err < 1e-2);

        for p in [raw, m, noisy] {
            smc_matrix_free(p);
        }
        smc_mask_free(mask);
    }
}

#[test]
fn exact_solvers_on_full_observation() {
    unsafe {
        let m = matrix(3, 3, &[1.0, 0.0, 2.0, 0.5, 1.5, 0.0, 0.0, 0.0, 3.0]);
        let mut mask = ptr::null_mut();
        smc_mask_new(3, 3, [1u8; 9].as_ptr(), &mut mask);
        for solver in [SmcSolver::StructuredNnm, SmcSolver::IrlsExact] {
            let mut res = ptr::null_mut();
            assert_eq!(smc_solve(solver, m, mask, ptr::null(), &mut res), SmcStatus::Ok);
            let mut err = 1.0;
            smc_relative_error(m, smc_result_matrix(res), &mut err);
            assert_eq!(err, 0.0);
            assert!(smc_result_converged(res));
            smc_result_free(res);
        }
        smc_mask_free(mask);
        smc_matrix_free(m);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/smc.h")).unwrap();
    for name in [
        "smc_matrix_new",
        "smc_mask_new",
        "smc_solve",
        "smc_last_error_message",
        "typedef struct SmcMatrix SmcMatrix",
        "SMC_STATUS_NULL_POINTER = 7",
        "SMC_SOLVER_STRUCTURED_SIRLS = 1",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
