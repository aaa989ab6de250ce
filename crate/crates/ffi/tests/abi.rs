use std::f64::consts::PI;
use std::ffi::{CStr, CString};
use std::ptr;

use levylan_ffi::*;

fn last_error() -> String {
    let p = levylan_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn cauchy_density_round_trip() {
    unsafe {
        let mut spec = ptr::null_mut();
        assert_eq!(levylan_spec_new(1.0, 1.0 / PI, 1.0 / PI, LevylanTaper::None, 0.0, &mut spec), LevylanStatus::Ok);
        let mut dens = ptr::null_mut();
        assert_eq!(levylan_density_new(spec, 0.0, &mut dens), LevylanStatus::Ok);
        for x in [-3.0, 0.0, 0.7, 12.0] {
            let want = 1.0 / (PI * (1.0 + x * x));
            assert!((levylan_density_value(dens, x) - want).abs() < 1e-9);
        }
        assert!((levylan_density_mass(dens) - 1.0).abs() < 1e-6);
        levylan_density_free(dens);
        levylan_spec_free(spec);
    }
}

#[test]
fn fisher_of_cauchy_is_half_identity() {
    let mut m = [0.0; 4];
    let s = unsafe { levylan_fisher(1.0, 1.0 / PI, 1.0 / PI, 1.0, m.as_mut_ptr()) };
    assert_eq!(s, LevylanStatus::Ok);
    assert!((m[0] - 0.5).abs() < 1e-4 && (m[3] - 0.5).abs() < 1e-4);
    assert!(m[1].abs() < 1e-12 && m[2].abs() < 1e-12);
}

#[test]
fn invalid_spec_reports_error() {
    let mut spec = ptr::null_mut();
    let s = unsafe { levylan_spec_new(2.5, 1.0, 1.0, LevylanTaper::None, 0.0, &mut spec) };
    assert_eq!(s, LevylanStatus::InvalidArgument);
    assert!(spec.is_null());
    assert!(last_error().contains("alpha"));
}

#[test]
fn null_handles_are_rejected() {
    let mut out = 0.0;
    let s = unsafe { levylan_spec_drift(ptr::null(), 0.1, &mut out) };
    assert_eq!(s, LevylanStatus::NullPointer);
    assert!(unsafe { levylan_density_value(ptr::null(), 0.0) }.is_nan());
    unsafe {
        levylan_spec_free(ptr::null_mut());
        levylan_model_free(ptr::null_mut());
    }
}

#[test]
fn json_spec_and_model_score() {
    let json = CString::new(r#"{"alpha": 1.5, "c_plus": 1.0, "c_minus": 1.0, "taper": {"kind": "none"}}"#).unwrap();
    unsafe {
        let mut spec = ptr::null_mut();
        assert_eq!(levylan_spec_from_json(json.as_ptr(), &mut spec), LevylanStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(levylan_model_new(spec, 0.0, 1.0, 0.01, &mut model), LevylanStatus::Ok);
        let mut lp = 0.0;
        assert_eq!(levylan_model_log_density(model, 0.0, &mut lp), LevylanStatus::Ok);
        assert!(lp.is_finite());
        // Symmetric law at β = 0: the β-score vanishes at the centre.
        let mut g = [f64::NAN; 2];
        assert_eq!(levylan_model_score(model, 0.0, g.as_mut_ptr()), LevylanStatus::Ok);
        assert!(g[0].abs() < 1e-6, "{g:?}");
        levylan_model_free(model);
        levylan_spec_free(spec);
    }
}

#[test]
fn simulation_is_seeded_and_checks_buffer() {
    unsafe {
        let mut spec = ptr::null_mut();
        assert_eq!(levylan_spec_new(1.5, 1.0, 0.5, LevylanTaper::None, 0.0, &mut spec), LevylanStatus::Ok);
        let mut a = vec![0.0; 101];
        let mut b = vec![0.0; 101];
        assert_eq!(levylan_simulate(spec, 0.2, 1.0, 100, 0.01, 7, a.as_mut_ptr(), a.len()), LevylanStatus::Ok);
        assert_eq!(levylan_simulate(spec, 0.2, 1.0, 100, 0.01, 7, b.as_mut_ptr(), b.len()), LevylanStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(a[0], 0.0);
        let s = levylan_simulate(spec, 0.2, 1.0, 100, 0.01, 7, a.as_mut_ptr(), 50);
        assert_eq!(s, LevylanStatus::BufferTooSmall);
        levylan_spec_free(spec);
    }
}
