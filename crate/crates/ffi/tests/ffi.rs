use std::ffi::{CStr, CString};
use std::ptr;

use pacset_ffi::*;

fn fixture() -> CString {
    let p = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/two_images.jsonl");
    CString::new(p).unwrap()
}

fn last_error() -> String {
    let p = pacset_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(pacset_binom_cdf(0, 3, 0.5, &mut v), PacsetStatus::Ok);
        assert_eq!(v, 0.125);
        assert!(pacset_last_error_message().is_null());

        let (mut k, mut found) = (0u64, false);
        assert_eq!(pacset_k_star(10, 0.5, 0.5, &mut k, &mut found), PacsetStatus::Ok);
        assert!(found);
        assert_eq!(k, 4);
        assert_eq!(pacset_k_star(1, 0.1, 0.01, &mut k, &mut found), PacsetStatus::Ok);
        assert!(!found);

        let a = [0.0, 0.0, 10.0, 10.0];
        let b = [5.0, 0.0, 15.0, 10.0];
        assert_eq!(pacset_iou(a.as_ptr(), b.as_ptr(), &mut v), PacsetStatus::Ok);
        assert!((v - 1.0 / 3.0).abs() < 1e-15);

        let scores = [0.9, 0.1, 0.5, 0.3];
        let (mut tau, mut feasible) = (0.0, false);
        assert_eq!(pacset_calibrate_threshold(scores.as_ptr(), 4, 0.5, 0.4, &mut tau, &mut feasible), PacsetStatus::Ok);
        assert_eq!((tau, feasible), (0.3, true));
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(pacset_binom_cdf(4, 3, 0.5, &mut v), PacsetStatus::Domain);
        assert!(last_error().contains("exceeds"));
        assert_eq!(pacset_binom_cdf(1, 3, 0.5, ptr::null_mut()), PacsetStatus::NullArgument);
        let bad = [5.0, 0.0, 1.0, 1.0];
        assert_eq!(pacset_iou(bad.as_ptr(), bad.as_ptr(), &mut v), PacsetStatus::Domain);

        let mut ds = ptr::null_mut();
        let missing = CString::new("/nonexistent/dump.jsonl").unwrap();
        assert_eq!(pacset_dataset_parse_file(missing.as_ptr(), false, &mut ds), PacsetStatus::Io);
        assert!(ds.is_null());
    }
}

#[test]
fn dataset_and_calibration_handles() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(pacset_dataset_parse_file(fixture().as_ptr(), false, &mut ds), PacsetStatus::Ok);
        let mut n = 0usize;
        assert_eq!(pacset_dataset_num_images(ds, &mut n), PacsetStatus::Ok);
        assert_eq!(n, 2);

        let mut det = ptr::null_mut();
        assert_eq!(pacset_detector_calibrate(ds, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, &mut det), PacsetStatus::Ok);
        let (mut a, mut b, mut c) = (1.0, 1.0, 1.0);
        assert_eq!(pacset_detector_thresholds(det, &mut a, &mut b, &mut c), PacsetStatus::Ok);
        // two calibration examples at (0.5, 0.5) give k* = 0: tau is the smallest score
        assert_eq!((a, b, c), (0.875, 0.7, 0.5));
        pacset_detector_free(det);

        let (mut tau, mut feasible) = (1.0, true);
        assert_eq!(pacset_edges_calibrate(ds, 0.005, 0.01, &mut tau, &mut feasible), PacsetStatus::Ok);
        assert_eq!((tau, feasible), (0.0, false));

        pacset_dataset_free(ds);
        pacset_dataset_free(ptr::null_mut());
        assert_eq!(pacset_dataset_num_images(ptr::null(), &mut n), PacsetStatus::NullArgument);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pacset.h")).unwrap();
    for name in [
        "typedef struct PacsetDataset PacsetDataset;",
        "PACSET_STATUS_OK = 0",
        "pacset_binom_cdf",
        "pacset_k_star",
        "pacset_calibrate_threshold",
        "pacset_iou",
        "pacset_dataset_parse_file",
        "pacset_dataset_free",
        "pacset_detector_calibrate",
        "pacset_detector_thresholds",
        "pacset_edges_calibrate",
        "pacset_last_error_message",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}
