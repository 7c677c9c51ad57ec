use std::ffi::{CStr, CString};
use std::ptr;

use algebroid_mech_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(am_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn chart(name: &str) -> *mut AmChart {
    let name = CString::new(name).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { am_chart_builtin(name.as_ptr(), &mut out) },
        AmStatus::Ok
    );
    out
}

fn lagrangian(c: *const AmChart, text: &str) -> Result<*mut AmLagrangian, AmStatus> {
    let text = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    match unsafe { am_lagrangian_parse(c, text.as_ptr(), &mut out) } {
        AmStatus::Ok => Ok(out),
        s => Err(s),
    }
}

#[test]
fn free_cubic_through_the_c_api() {
    let c = chart("trivial_r1");
    let l = lagrangian(c, "v1^2/2").unwrap();
    let s0 = [0.0, 0.0, 0.0, 6.0];
    let mut tr = ptr::null_mut();
    unsafe {
        assert_eq!(
            am_integrate(c, l, s0.as_ptr(), 4, 0.0, 1.0, 1e-3, 0.0, &mut tr),
            AmStatus::Ok
        );
        let len = am_trajectory_len(tr);
        assert_eq!(len, 1001);
        assert_eq!(am_trajectory_state_dim(tr), 4);
        let mut times = vec![0.0; len];
        assert_eq!(
            am_trajectory_times(tr, times.as_mut_ptr(), len),
            AmStatus::Ok
        );
        assert_eq!(times[len - 1], 1.0);
        let mut end = [0.0; 4];
        assert_eq!(
            am_trajectory_state(tr, len - 1, end.as_mut_ptr(), 4),
            AmStatus::Ok
        );
        assert!(
            (end[0] + 1.0).abs() < 1e-12
                && (end[1] + 3.0).abs() < 1e-12
                && (end[2] + 6.0).abs() < 1e-12
        );
        let mut e = 0.0;
        assert_eq!(am_trajectory_energy(tr, len - 1, &mut e), AmStatus::Ok);
        assert!(am_trajectory_energy_drift(tr) < 1e-10);
        assert_eq!(
            am_trajectory_state(tr, len, end.as_mut_ptr(), 4),
            AmStatus::InvalidArgument
        );
        am_trajectory_free(tr);
        am_lagrangian_free(l);
        am_chart_free(c);
    }
}

#[test]
fn rhs_and_energy() {
    let c = chart("trivial_r1");
    let l = lagrangian(c, "v1^2/2").unwrap();
    let s = [0.0, 0.0, 0.0, 6.0];
    let mut d = [0.0; 4];
    let mut e = 0.0;
    unsafe {
        assert_eq!(am_rhs(c, l, s.as_ptr(), 4, d.as_mut_ptr()), AmStatus::Ok);
        assert_eq!(d, [0.0, 0.0, -6.0, 0.0]);
        assert_eq!(am_energy(c, l, s.as_ptr(), 4, &mut e), AmStatus::Ok);
        assert_eq!(
            am_rhs(c, l, s.as_ptr(), 3, d.as_mut_ptr()),
            AmStatus::Dimension
        );
        assert!(
            last_error().contains("expected length 4"),
            "{}",
            last_error()
        );
        am_lagrangian_free(l);
        am_chart_free(c);
    }
}

#[test]
fn alpha_round_trip_on_so3() {
    let c = chart("so3");
    unsafe {
        assert_eq!((am_chart_base_dim(c), am_chart_rank(c)), (0, 3));
        let d: Vec<f64> = (0..21).map(|k| (k as f64 * 0.37).sin()).collect();
        let mut img = vec![0.0; 21];
        let mut back = vec![0.0; 21];
        assert_eq!(
            am_alpha_map(c, d.as_ptr(), 21, img.as_mut_ptr()),
            AmStatus::Ok
        );
        assert_eq!(
            am_alpha_inverse(c, img.as_ptr(), 21, back.as_mut_ptr()),
            AmStatus::Ok
        );
        assert!(d.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-13));
        am_chart_free(c);
    }
}

#[test]
fn structure_check() {
    let (mut a, mut j, mut pass) = (0.0, 0.0, false);
    for (name, expect) in [("heisenberg", true), ("so3_corrupted", false)] {
        let c = chart(name);
        unsafe {
            assert_eq!(
                am_chart_check_structure(c, 100, 42, 1e-10, &mut a, &mut j, &mut pass),
                AmStatus::Ok
            );
            am_chart_free(c);
        }
        assert_eq!(pass, expect, "{name}");
    }
}

#[test]
fn error_codes() {
    let mut out = ptr::null_mut();
    let bad = CString::new("klein_bottle").unwrap();
    unsafe {
        assert_eq!(
            am_chart_builtin(bad.as_ptr(), &mut out),
            AmStatus::InvalidArgument
        );
        assert!(last_error().contains("klein_bottle"));
        assert_eq!(
            am_chart_builtin(ptr::null(), &mut out),
            AmStatus::NullPointer
        );
    }
    let c = chart("trivial_r2");
    assert_eq!(lagrangian(c, "v1^2 +").unwrap_err(), AmStatus::Parse);
    assert_eq!(lagrangian(c, "w1").unwrap_err(), AmStatus::Parse);
    let l = lagrangian(c, "v1^2/2").unwrap();
    let s = [0.0; 8];
    let mut d = [0.0; 8];
    let mut tr = ptr::null_mut();
    unsafe {
        assert_eq!(
            am_rhs(c, l, s.as_ptr(), 8, d.as_mut_ptr()),
            AmStatus::SingularHessian
        );
        assert_eq!(
            am_integrate(c, l, s.as_ptr(), 8, 1.0, 0.0, 0.1, 0.0, &mut tr),
            AmStatus::InvalidArgument
        );
        assert!(tr.is_null());
        let other = chart("trivial_r1");
        assert_eq!(
            am_energy(other, l, s.as_ptr(), 4, d.as_mut_ptr()),
            AmStatus::Dimension
        );
        assert_eq!(
            am_rhs(ptr::null(), l, s.as_ptr(), 8, d.as_mut_ptr()),
            AmStatus::NullPointer
        );
        am_chart_free(other);
        am_lagrangian_free(l);
        am_chart_free(c);
        am_chart_free(ptr::null_mut());
        assert_eq!(am_trajectory_len(ptr::null()), 0);
        assert!(am_trajectory_energy_drift(ptr::null()).is_nan());
        assert!(CStr::from_ptr(am_version())
            .to_str()
            .unwrap()
            .starts_with("0."));
    }
}
