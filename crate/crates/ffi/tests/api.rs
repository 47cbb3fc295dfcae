use std::ffi::{CStr, CString};
use std::ptr;

use socialgrad_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sg_last_error()) }.to_string_lossy().into_owned()
}

struct Problem(*mut SgProblem);

impl Problem {
    fn preset(name: &str, c_fraction: f64) -> Self {
        let name = CString::new(name).unwrap();
        let mut out = ptr::null_mut();
        let s = unsafe { sg_problem_new_preset(name.as_ptr(), c_fraction, &mut out) };
        assert_eq!(s, SgStatus::Ok, "{}", last_error());
        Problem(out)
    }
}

impl Drop for Problem {
    fn drop(&mut self) {
        unsafe { sg_problem_free(self.0) }
    }
}

#[test]
fn version_matches_manifest() {
    let v = unsafe { CStr::from_ptr(sg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn preset_levels_and_response_at_optimum() {
    let pr = Problem::preset("oscillator-2", 0.5);
    assert_eq!(unsafe { sg_problem_dim(pr.0) }, 2);
    let (mut c_star, mut c) = (0.0, 0.0);
    assert_eq!(unsafe { sg_problem_levels(pr.0, &mut c_star, &mut c) }, SgStatus::Ok);
    assert!((c_star - 0.030553).abs() < 1e-6, "{c_star}");
    assert!((c - 0.5 * c_star).abs() < 1e-15);

    let mut pd = [0.0; 2];
    let mut x = [0.0; 2];
    let mut interior = false;
    unsafe {
        assert_eq!(sg_problem_p_dagger(pr.0, pd.as_mut_ptr(), 2), SgStatus::Ok);
        assert_eq!(sg_solve_response(pr.0, pd.as_ptr(), x.as_mut_ptr(), 2, &mut interior), SgStatus::Ok);
    }
    assert!(interior);
    assert!((x[0] - 0.8).abs() < 1e-8 && (x[1] - 0.7).abs() < 1e-8, "{x:?}");

    let mut inside = false;
    let mut vdot = 1.0;
    unsafe {
        assert_eq!(sg_in_sublevel_set(pr.0, pd.as_ptr(), 2, &mut inside), SgStatus::Ok);
        assert_eq!(sg_lyapunov_derivative(pr.0, pd.as_ptr(), 2, 1e-6, &mut vdot), SgStatus::Ok);
    }
    assert!(inside);
    assert!(vdot.abs() < 1e-10, "{vdot}");
}

#[test]
fn errors_carry_status_and_message() {
    let mut out = ptr::null_mut();
    let name = CString::new("no-such-game").unwrap();
    let s = unsafe { sg_problem_new_preset(name.as_ptr(), 0.5, &mut out) };
    assert_eq!(s, SgStatus::Config);
    assert!(out.is_null());
    assert!(last_error().contains("no-such-game"), "{}", last_error());

    let s = unsafe { sg_problem_new_preset(ptr::null(), 0.5, &mut out) };
    assert_eq!(s, SgStatus::NullPointer);

    let pr = Problem::preset("aggregative-5", 0.5);
    let p = [0.0; 4];
    let mut x = [0.0; 4];
    let s = unsafe { sg_solve_response(pr.0, p.as_ptr(), x.as_mut_ptr(), 4, ptr::null_mut()) };
    assert_eq!(s, SgStatus::DimensionMismatch);
    assert!(last_error().contains("expected 5"), "{}", last_error());

    let name = CString::new("aggregative-5").unwrap();
    let s = unsafe { sg_problem_new_preset(name.as_ptr(), 1.5, &mut out) };
    assert_ne!(s, SgStatus::Ok);
    assert!(out.is_null());
}

#[test]
fn flow_reduces_lyapunov_value() {
    let pr = Problem::preset("aggregative-5", 0.8);
    let mut pd = [0.0; 5];
    unsafe { sg_problem_p_dagger(pr.0, pd.as_mut_ptr(), 5) };
    let p0: Vec<f64> = pd.iter().map(|v| v + 0.3).collect();
    let mut flow = ptr::null_mut();
    let s = unsafe { sg_flow_run(pr.0, p0.as_ptr(), 5, 0.0, 20.0, 10, &mut flow) };
    assert_eq!(s, SgStatus::Ok, "{}", last_error());
    let n = unsafe { sg_flow_len(flow) };
    assert!(n > 2);
    let (mut v_first, mut v_last, mut t_last) = (0.0, 0.0, 0.0);
    let mut p = [0.0; 5];
    unsafe {
        assert_eq!(sg_flow_sample(flow, 0, ptr::null_mut(), p.as_mut_ptr(), 5, &mut v_first), SgStatus::Ok);
        assert_eq!(sg_flow_sample(flow, n - 1, &mut t_last, ptr::null_mut(), 0, &mut v_last), SgStatus::Ok);
        assert_eq!(sg_flow_sample(flow, n, ptr::null_mut(), ptr::null_mut(), 0, ptr::null_mut()), SgStatus::OutOfRange);
        sg_flow_free(flow);
    }
    assert_eq!(p.to_vec(), p0);
    assert!((t_last - 20.0).abs() < 1e-9);
    assert!(v_last < 1e-3 * v_first, "{v_first} -> {v_last}");
}

#[test]
fn ttsa_run_tracks_and_writes_csv() {
    let pr = Problem::preset("oscillator-2", 0.95);
    let x0 = [0.0, -0.5];
    let p0 = [-3.0, -3.0];
    let mut run = ptr::null_mut();
    let s = unsafe { sg_ttsa_run(pr.0, SgRule::Pg, 0.0, x0.as_ptr(), p0.as_ptr(), 2, 100_000, 1000, &mut run) };
    assert_eq!(s, SgStatus::Ok, "{}", last_error());
    let n = unsafe { sg_ttsa_len(run) };
    let mut k = 0u64;
    let mut x = [0.0; 2];
    let (mut track, mut inc) = (0.0, 0.0);
    let mut accepted = false;
    unsafe {
        let s = sg_ttsa_sample(
            run, n - 1, &mut k, x.as_mut_ptr(), ptr::null_mut(), 2, &mut track, &mut inc, &mut accepted,
        );
        assert_eq!(s, SgStatus::Ok);
    }
    assert_eq!(k, 100_000);
    assert!(accepted);
    assert!(track < 1e-2 && inc < 1e-2, "{track} {inc}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sg_ttsa_write_csv(run, cpath.as_ptr()) }, SgStatus::Ok);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), n + 1);
    unsafe { sg_ttsa_free(run) };
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        sg_problem_free(ptr::null_mut());
        sg_flow_free(ptr::null_mut());
        sg_ttsa_free(ptr::null_mut());
        assert_eq!(sg_problem_dim(ptr::null()), 0);
        assert_eq!(sg_flow_len(ptr::null()), 0);
        assert_eq!(sg_ttsa_len(ptr::null()), 0);
    }
}
