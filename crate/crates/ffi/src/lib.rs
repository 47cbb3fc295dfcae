//! C interface to `socialgrad`.
//!
//! Every entry point returns an [`SgStatus`]; on failure the thread's last
//! error message is available from [`sg_last_error`]. Problems, flow
//! trajectories and TTSA runs are opaque handles released with their `_free`
//! function. Vectors cross the boundary as `(pointer, length)` pairs whose
//! length must equal the problem dimension.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use socialgrad::error::Error;
use socialgrad::experiment::ExperimentConfig;
use socialgrad::games::preset;
use socialgrad::linalg::Vector;
use socialgrad::planner::{
    in_sublevel_set, integrate_social_gradient_flow, lyapunov_derivative, FlowConfig, FlowTrajectory,
    IncentiveProblem, SocialObjective,
};
use socialgrad::ttsa::{run_ttsa, LearningRule, StepSchedule, TtsaConfig, TtsaTrajectory};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Config = 4,
    Construction = 5,
    Numerical = 6,
    Domain = 7,
    Io = 8,
    OutOfRange = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgRule {
    Ne = 0,
    Br = 1,
    Pg = 2,
}

/// Game, social objective and sublevel set.
pub struct SgProblem(IncentiveProblem);

/// Recorded social-gradient flow.
pub struct SgFlow(FlowTrajectory);

/// Recorded two-timescale run.
pub struct SgTtsa(TtsaTrajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> SgStatus {
    match e {
        Error::DimensionMismatch { .. } => SgStatus::DimensionMismatch,
        Error::Config(_) | Error::Serialization(_) | Error::SamplingRate { .. } | Error::UnsupportedRule { .. } => {
            SgStatus::Config
        }
        Error::Construction(_) => SgStatus::Construction,
        Error::Singular(_) | Error::NonConvergence { .. } => SgStatus::Numerical,
        Error::Precondition(_) | Error::LeftResponseDomain(_) | Error::Contract(_) => SgStatus::Domain,
        Error::Io(_) => SgStatus::Io,
    }
}

struct Fail(SgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Res<T> = std::result::Result<T, Fail>;

fn guard(f: impl FnOnce() -> Res<()>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SgStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| Fail(SgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| Fail(SgStatus::NullPointer, format!("{what} is null")))
}

unsafe fn vector_in(ptr: *const f64, len: usize, dim: usize, what: &str) -> Res<Vector> {
    if ptr.is_null() {
        return Err(Fail(SgStatus::NullPointer, format!("{what} is null")));
    }
    if len != dim {
        return Err(Fail(SgStatus::DimensionMismatch, format!("{what} has length {len}, expected {dim}")));
    }
    Ok(Vector::from_column_slice(std::slice::from_raw_parts(ptr, len)))
}

unsafe fn slice_out<'a>(ptr: *mut f64, len: usize, dim: usize, what: &str) -> Res<&'a mut [f64]> {
    if ptr.is_null() {
        return Err(Fail(SgStatus::NullPointer, format!("{what} is null")));
    }
    if len != dim {
        return Err(Fail(SgStatus::DimensionMismatch, format!("{what} has length {len}, expected {dim}")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn str_in<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(Fail(SgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a named preset (`"aggregative-5"` or `"oscillator-2"`) with its
/// default social optimum and `c = c_fraction · c*`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_problem_new_preset(
    name: *const c_char,
    c_fraction: f64,
    out: *mut *mut SgProblem,
) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let p = preset(str_in(name, "name")?)?;
        let problem = IncentiveProblem::new(p.game, SocialObjective::centered_quadratic(p.x_dagger), c_fraction)?;
        *out = Box::into_raw(Box::new(SgProblem(problem)));
        Ok(())
    })
}

/// Builds the problem described by a TOML experiment configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_problem_from_config(path: *const c_char, out: *mut *mut SgProblem) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::load(Path::new(str_in(path, "path")?))?;
        *out = Box::into_raw(Box::new(SgProblem(cfg.build_problem()?)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_problem_free(problem: *mut SgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_problem_dim(problem: *const SgProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.dim())
}

/// Writes `c*` and the active sublevel `c`.
///
/// # Safety
/// `problem` must be a live handle; `c_star` and `c` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_problem_levels(problem: *const SgProblem, c_star: *mut f64, c: *mut f64) -> SgStatus {
    guard(|| {
        let g = handle(problem, "problem")?.0.geometry();
        *out_ptr(c_star, "c_star")? = g.c_star;
        *out_ptr(c, "c")? = g.c;
        Ok(())
    })
}

/// Writes the optimal incentive `p† = −G0(x†)`.
///
/// # Safety
/// `problem` must be a live handle and `out` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_problem_p_dagger(problem: *const SgProblem, out: *mut f64, len: usize) -> SgStatus {
    guard(|| {
        let pr = &handle(problem, "problem")?.0;
        slice_out(out, len, pr.dim(), "out")?.copy_from_slice(pr.p_dagger().as_slice());
        Ok(())
    })
}

/// Solves for the equilibrium `x*(p)`; `interior` may be null.
///
/// # Safety
/// `p` and `x_out` must point to `len` doubles; `interior` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sg_solve_response(
    problem: *const SgProblem,
    p: *const f64,
    x_out: *mut f64,
    len: usize,
    interior: *mut bool,
) -> SgStatus {
    guard(|| {
        let pr = &handle(problem, "problem")?.0;
        let p = vector_in(p, len, pr.dim(), "p")?;
        let out = slice_out(x_out, len, pr.dim(), "x_out")?;
        let r = pr.response(&p, None)?;
        out.copy_from_slice(r.x_star.as_slice());
        if let Some(flag) = interior.as_mut() {
            *flag = r.interior;
        }
        Ok(())
    })
}

/// Membership of `p` in the sublevel set `P_c`.
///
/// # Safety
/// `p` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_in_sublevel_set(
    problem: *const SgProblem,
    p: *const f64,
    len: usize,
    out: *mut bool,
) -> SgStatus {
    guard(|| {
        let pr = &handle(problem, "problem")?.0;
        let p = vector_in(p, len, pr.dim(), "p")?;
        *out_ptr(out, "out")? = in_sublevel_set(pr, &p)?;
        Ok(())
    })
}

/// Time derivative of `V(p) = Φ(x*(p)) − Φ(x†)` along the flow, with a
/// finite-difference response Jacobian of step `h`.
///
/// # Safety
/// `p` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_lyapunov_derivative(
    problem: *const SgProblem,
    p: *const f64,
    len: usize,
    h: f64,
    out: *mut f64,
) -> SgStatus {
    guard(|| {
        let pr = &handle(problem, "problem")?.0;
        let p = vector_in(p, len, pr.dim(), "p")?;
        *out_ptr(out, "out")? = lyapunov_derivative(pr, &p, h)?;
        Ok(())
    })
}

/// Integrates the social-gradient flow with RK4 from `p0` over `horizon`.
/// A nonpositive `dt` selects the game's default step.
///
/// # Safety
/// `p0` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_flow_run(
    problem: *const SgProblem,
    p0: *const f64,
    len: usize,
    dt: f64,
    horizon: f64,
    record_every: usize,
    out: *mut *mut SgFlow,
) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let pr = &handle(problem, "problem")?.0;
        let p0 = vector_in(p0, len, pr.dim(), "p0")?;
        let mut cfg = FlowConfig::for_game(pr.game(), horizon);
        if dt > 0.0 {
            cfg.dt = dt;
        }
        cfg.record_every = record_every;
        cfg.validate()?;
        let tr = integrate_social_gradient_flow(pr, &p0, &cfg)?;
        *out = Box::into_raw(Box::new(SgFlow(tr)));
        Ok(())
    })
}

/// Number of recorded flow samples, or 0 for a null handle.
///
/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_flow_len(flow: *const SgFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.0.samples.len())
}

/// Reads sample `index`: time, incentive and `V`. Any output may be null.
///
/// # Safety
/// `flow` must be a live handle; `p_out` null or pointing to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sg_flow_sample(
    flow: *const SgFlow,
    index: usize,
    t: *mut f64,
    p_out: *mut f64,
    len: usize,
    v: *mut f64,
) -> SgStatus {
    guard(|| {
        let f = &handle(flow, "flow")?.0;
        let s = f.samples.get(index).ok_or_else(|| {
            Fail(SgStatus::OutOfRange, format!("sample {index} of {}", f.samples.len()))
        })?;
        if let Some(t) = t.as_mut() {
            *t = s.t;
        }
        if !p_out.is_null() {
            slice_out(p_out, len, s.p.len(), "p_out")?.copy_from_slice(&s.p);
        }
        if let Some(v) = v.as_mut() {
            *v = s.v;
        }
        Ok(())
    })
}

/// # Safety
/// `flow` must come from [`sg_flow_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_flow_free(flow: *mut SgFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Runs the two-timescale iteration under the default schedules
/// `a_k = (k+1)^-0.6`, `β_k = (k+1)^-0.9`. For [`SgRule::Pg`] a nonpositive
/// `pg_eta` selects the default step.
///
/// # Safety
/// `x0` and `p0` must point to `len` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_ttsa_run(
    problem: *const SgProblem,
    rule: SgRule,
    pg_eta: f64,
    x0: *const f64,
    p0: *const f64,
    len: usize,
    max_iter: u64,
    record_every: u64,
    out: *mut *mut SgTtsa,
) -> SgStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let pr = &handle(problem, "problem")?.0;
        let x0 = vector_in(x0, len, pr.dim(), "x0")?;
        let p0 = vector_in(p0, len, pr.dim(), "p0")?;
        let rule = match rule {
            SgRule::Ne => LearningRule::Ne,
            SgRule::Br => LearningRule::Br,
            SgRule::Pg if pg_eta > 0.0 => LearningRule::Pg { eta: pg_eta },
            SgRule::Pg => LearningRule::default_pg(pr.game()),
        };
        let cfg = TtsaConfig {
            schedule: StepSchedule::default(),
            rule,
            c: pr.geometry().c,
            max_iter,
            record_every,
            seed: 0,
        };
        let tr = run_ttsa(pr, &x0, &p0, &cfg)?;
        *out = Box::into_raw(Box::new(SgTtsa(tr)));
        Ok(())
    })
}

/// Number of recorded TTSA samples, or 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sg_ttsa_len(run: *const SgTtsa) -> usize {
    run.as_ref().map_or(0, |r| r.0.samples.len())
}

/// Reads sample `index`. Any output may be null; `x_out` and `p_out`, when
/// given, must hold `len` doubles.
///
/// # Safety
/// `run` must be a live handle and every non-null pointer valid.
#[no_mangle]
pub unsafe extern "C" fn sg_ttsa_sample(
    run: *const SgTtsa,
    index: usize,
    k: *mut u64,
    x_out: *mut f64,
    p_out: *mut f64,
    len: usize,
    tracking_error: *mut f64,
    incentive_error: *mut f64,
    accepted: *mut bool,
) -> SgStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        let s = r.samples.get(index).ok_or_else(|| {
            Fail(SgStatus::OutOfRange, format!("sample {index} of {}", r.samples.len()))
        })?;
        if let Some(k) = k.as_mut() {
            *k = s.k;
        }
        if !x_out.is_null() {
            slice_out(x_out, len, s.x.len(), "x_out")?.copy_from_slice(&s.x);
        }
        if !p_out.is_null() {
            slice_out(p_out, len, s.p.len(), "p_out")?.copy_from_slice(&s.p);
        }
        if let Some(e) = tracking_error.as_mut() {
            *e = s.tracking_error;
        }
        if let Some(e) = incentive_error.as_mut() {
            *e = s.incentive_error;
        }
        if let Some(a) = accepted.as_mut() {
            *a = s.indicator_accepted;
        }
        Ok(())
    })
}

/// Writes the run as CSV.
///
/// # Safety
/// `run` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sg_ttsa_write_csv(run: *const SgTtsa, path: *const c_char) -> SgStatus {
    guard(|| {
        let r = &handle(run, "run")?.0;
        r.save_csv(Path::new(str_in(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`sg_ttsa_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_ttsa_free(run: *mut SgTtsa) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
