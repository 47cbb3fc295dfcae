//! The planner's side: social objective, sublevel sets of incentives and the
//! social-gradient flow `ṗ = ∇Φ(x*(p))`.
//!
//! Along the flow `V(p) = Φ(x*(p)) − Φ(x†)` is a Lyapunov function, and every
//! sublevel set `P_c = {p ∈ P : V(p) ≤ c}` with `c < c*` is forward invariant.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BoxSpace, GameModel, Incentive};
use crate::linalg::{self, Vector};
use crate::output;
use crate::solver::{response_jacobian_fd, solve_response, ResponseResult, ResponseSolverConfig};

/// A smooth strongly convex social cost `Φ`.
pub trait SocialCost: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;

    /// Exact `min_{x ∈ ∂X} Φ(x) − Φ(x†)` when known in closed form.
    fn boundary_gap(&self, _space: &BoxSpace) -> Option<f64> {
        None
    }
}

/// `Φ(x) = ½ Σ w_i (x_i − x†_i)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedQuadratic {
    x_dagger: Vector,
    weights: Vector,
}

impl SocialCost for WeightedQuadratic {
    fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.x_dagger;
        0.5 * d.component_mul(&d).dot(&self.weights)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        (x - &self.x_dagger).component_mul(&self.weights)
    }

    fn boundary_gap(&self, space: &BoxSpace) -> Option<f64> {
        (0..self.x_dagger.len())
            .map(|i| {
                let d = (self.x_dagger[i] - space.lower()[i]).min(space.upper()[i] - self.x_dagger[i]);
                0.5 * self.weights[i] * d * d
            })
            .reduce(f64::min)
    }
}

/// Social objective with its optimum and curvature constants.
#[derive(Clone)]
pub struct SocialObjective {
    cost: Arc<dyn SocialCost>,
    x_dagger: Vector,
    mu_phi: f64,
    lip_l2: f64,
}

impl fmt::Debug for SocialObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SocialObjective")
            .field("cost", &self.cost)
            .field("x_dagger", &self.x_dagger.as_slice())
            .field("mu_phi", &self.mu_phi)
            .field("lip_l2", &self.lip_l2)
            .finish()
    }
}

impl SocialObjective {
    /// `Φ(x) = ½‖x − x†‖²`.
    pub fn centered_quadratic(x_dagger: Vector) -> Self {
        let n = x_dagger.len();
        Self::weighted_quadratic(x_dagger, Vector::from_element(n, 1.0)).expect("unit weights")
    }

    pub fn weighted_quadratic(x_dagger: Vector, weights: Vector) -> Result<Self> {
        if weights.len() != x_dagger.len() {
            return Err(Error::dims("objective weights", x_dagger.len(), weights.len()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("objective weights must be positive, got {:?}", weights.as_slice())));
        }
        let mu = weights.min();
        let l2 = weights.max();
        Self::custom(
            Arc::new(WeightedQuadratic {
                x_dagger: x_dagger.clone(),
                weights,
            }),
            x_dagger,
            mu,
            l2,
        )
    }

    /// Wraps an arbitrary cost. `x_dagger` must be a stationary point.
    pub fn custom(cost: Arc<dyn SocialCost>, x_dagger: Vector, mu_phi: f64, lip_l2: f64) -> Result<Self> {
        if !linalg::all_finite(&x_dagger) {
            return Err(Error::Config("x† has non-finite entries".into()));
        }
        if !(mu_phi > 0.0 && lip_l2 >= mu_phi) {
            return Err(Error::Config(format!("need 0 < μ_Φ ≤ L2, got μ_Φ = {mu_phi}, L2 = {lip_l2}")));
        }
        let g = cost.gradient(&x_dagger);
        if g.norm() > 1e-12 {
            return Err(Error::Config(format!("∇Φ(x†) = {:?} is not zero", g.as_slice())));
        }
        Ok(Self {
            cost,
            x_dagger,
            mu_phi,
            lip_l2,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_dagger.len()
    }

    pub fn phi(&self, x: &Vector) -> f64 {
        self.cost.value(x)
    }

    pub fn grad_phi(&self, x: &Vector) -> Vector {
        self.cost.gradient(x)
    }

    /// `Φ(x) − Φ(x†)`.
    pub fn gap(&self, x: &Vector) -> f64 {
        self.cost.value(x) - self.cost.value(&self.x_dagger)
    }

    pub fn x_dagger(&self) -> &Vector {
        &self.x_dagger
    }

    pub fn mu_phi(&self) -> f64 {
        self.mu_phi
    }

    pub fn lip_l2(&self) -> f64 {
        self.lip_l2
    }

    pub fn cost(&self) -> &dyn SocialCost {
        self.cost.as_ref()
    }

    fn check_space(&self, space: &BoxSpace) -> Result<()> {
        space.check_dim(&self.x_dagger, "objective x†")?;
        if !space.is_interior(&self.x_dagger) {
            return Err(Error::Config(format!(
                "x† = {:?} must lie strictly inside the box",
                self.x_dagger.as_slice()
            )));
        }
        Ok(())
    }
}

/// Points per free coordinate used by default when scanning box faces.
pub fn default_face_grid(n: usize) -> usize {
    if n <= 1 {
        return 2;
    }
    ((1e4f64).powf(1.0 / (n - 1) as f64).floor() as usize).clamp(3, 1001)
}

/// `c* = min_{x ∈ ∂X} Φ(x) − Φ(x†)`: grid search on each of the `2n` faces,
/// refined by projected gradient descent inside the face.
pub fn compute_c_star(obj: &SocialObjective, space: &BoxSpace, face_grid: usize) -> Result<f64> {
    obj.check_space(space)?;
    if face_grid < 2 {
        return Err(Error::Config(format!("face grid must be ≥ 2, got {face_grid}")));
    }
    let n = space.dim();
    let per_face = (face_grid as f64).powi(n as i32 - 1);
    if per_face > 5e7 {
        return Err(Error::Config(format!("face grid {face_grid}^{} is too large", n - 1)));
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for bound in [space.lower()[i], space.upper()[i]] {
            let mut lower = space.lower().to_vec();
            let mut upper = space.upper().to_vec();
            lower[i] = bound;
            upper[i] = bound;
            let (mut x, mut val) = (space.center(), f64::INFINITY);
            x[i] = bound;
            if n > 1 {
                let face_free = face_box(space, i);
                for y in face_free.grid(face_grid) {
                    let z = embed(&y, i, bound);
                    let v = obj.gap(&z);
                    if v < val {
                        val = v;
                        x = z;
                    }
                }
            } else {
                val = obj.gap(&x);
            }
            let refined = refine_on_face(obj, &lower, &upper, x);
            best = best.min(val.min(obj.gap(&refined)));
        }
    }
    if !(best > 0.0) {
        return Err(Error::Config(format!("c* = {best} is not positive; x† is not interior")));
    }
    Ok(best)
}

fn face_box(space: &BoxSpace, fixed: usize) -> BoxSpace {
    let keep = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .filter(|(j, _)| *j != fixed)
            .map(|(_, b)| *b)
            .collect()
    };
    BoxSpace::new(keep(space.lower()), keep(space.upper())).expect("face of a valid box")
}

fn embed(y: &Vector, fixed: usize, value: f64) -> Vector {
    let n = y.len() + 1;
    Vector::from_fn(n, |j, _| match j.cmp(&fixed) {
        std::cmp::Ordering::Less => y[j],
        std::cmp::Ordering::Equal => value,
        std::cmp::Ordering::Greater => y[j - 1],
    })
}

fn refine_on_face(obj: &SocialObjective, lower: &[f64], upper: &[f64], mut x: Vector) -> Vector {
    let step = 1.0 / obj.lip_l2();
    let clamp = |v: Vector| Vector::from_fn(v.len(), |j, _| v[j].clamp(lower[j], upper[j]));
    for _ in 0..10_000 {
        let next = clamp(&x - obj.grad_phi(&x) * step);
        let moved = (&next - &x).norm();
        x = next;
        if moved <= 1e-15 {
            break;
        }
    }
    x
}

/// `c*`, the chosen level `c < c*` and the optimal incentive `p† = −G0(x†)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SublevelGeometry {
    pub c_star: f64,
    pub c: f64,
    pub p_dagger: Vec<f64>,
}

impl SublevelGeometry {
    pub fn p_dagger(&self) -> Vector {
        Vector::from_column_slice(&self.p_dagger)
    }
}

/// A game, a social objective and the derived sublevel geometry.
#[derive(Clone, Debug)]
pub struct IncentiveProblem {
    game: GameModel,
    objective: SocialObjective,
    geometry: SublevelGeometry,
    solver: ResponseSolverConfig,
}

impl IncentiveProblem {
    /// Builds the problem with `c = c_fraction · c*`, `c_fraction ∈ (0, 1)`.
    pub fn new(game: GameModel, objective: SocialObjective, c_fraction: f64) -> Result<Self> {
        if !(c_fraction > 0.0 && c_fraction < 1.0) {
            return Err(Error::Config(format!("c_fraction must lie in (0, 1), got {c_fraction}")));
        }
        let space = game.space();
        let c_star = compute_c_star(&objective, space, default_face_grid(space.dim()))?;
        if let Some(exact) = objective.cost().boundary_gap(space) {
            if (exact - c_star).abs() > 1e-9 * exact.max(1.0) {
                return Err(Error::Construction(format!(
                    "c* face search gives {c_star}, closed form gives {exact}"
                )));
            }
        }
        let solver = ResponseSolverConfig::for_game(&game);
        solver.validate(&game)?;
        let p_dagger = -game.g0(objective.x_dagger());
        let r = solve_response(&game, &Incentive::new(p_dagger.clone())?, &solver, Some(objective.x_dagger()))?;
        if (&r.x_star - objective.x_dagger()).norm() > 1e-8 {
            return Err(Error::Construction(format!(
                "x*(p†) = {:?} does not recover x†",
                r.x_star.as_slice()
            )));
        }
        Ok(Self {
            geometry: SublevelGeometry {
                c_star,
                c: c_fraction * c_star,
                p_dagger: p_dagger.iter().copied().collect(),
            },
            game,
            objective,
            solver,
        })
    }

    /// Same problem at another level `c ∈ (0, c*)`.
    pub fn with_c(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c < self.geometry.c_star) {
            return Err(Error::Config(format!("c = {c} must lie in (0, c* = {})", self.geometry.c_star)));
        }
        let mut out = self.clone();
        out.geometry.c = c;
        Ok(out)
    }

    pub fn with_solver(&self, solver: ResponseSolverConfig) -> Result<Self> {
        solver.validate(&self.game)?;
        let mut out = self.clone();
        out.solver = solver;
        Ok(out)
    }

    pub fn game(&self) -> &GameModel {
        &self.game
    }

    pub fn objective(&self) -> &SocialObjective {
        &self.objective
    }

    pub fn geometry(&self) -> &SublevelGeometry {
        &self.geometry
    }

    pub fn solver(&self) -> &ResponseSolverConfig {
        &self.solver
    }

    pub fn dim(&self) -> usize {
        self.game.dim()
    }

    pub fn p_dagger(&self) -> Vector {
        self.geometry.p_dagger()
    }

    pub fn response(&self, p: &Vector, warm: Option<&Vector>) -> Result<ResponseResult> {
        solve_response(&self.game, &Incentive::new(p.clone())?, &self.solver, warm)
    }

    /// `V(p) = Φ(x*(p)) − Φ(x†)` together with the response.
    pub fn lyapunov(&self, p: &Vector, warm: Option<&Vector>) -> Result<(f64, ResponseResult)> {
        let r = self.response(p, warm)?;
        Ok((self.objective.gap(&r.x_star), r))
    }

    /// Membership test returning the response it was decided on.
    pub fn membership(&self, p: &Vector, warm: Option<&Vector>) -> Result<(bool, ResponseResult)> {
        let r = self.response(p, warm)?;
        let inside = r.interior && self.objective.gap(&r.x_star) <= self.geometry.c;
        Ok((inside, r))
    }
}

/// `p ∈ P_c`: the response is interior and its cost gap is at most `c`.
pub fn in_sublevel_set(problem: &IncentiveProblem, p: &Vector) -> Result<bool> {
    Ok(problem.membership(p, None)?.0)
}

/// `∇Φ(x*)ᵀ Sym(Dx*(p)) ∇Φ(x*)` with `Dx*` from central differences of step `h`.
pub fn lyapunov_derivative(problem: &IncentiveProblem, p: &Vector, h: f64) -> Result<f64> {
    let r = problem.response(p, None)?;
    let g = problem.objective.grad_phi(&r.x_star);
    if g.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let jac = response_jacobian_fd(&problem.game, &Incentive::new(p.clone())?, &problem.solver, h)?;
    Ok(g.dot(&(linalg::sym(&jac) * &g)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    ExplicitEuler,
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub integrator: Integrator,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    /// Stop once `‖∇Φ(x*(p))‖` falls to this value.
    pub stop_tol: f64,
}

impl FlowConfig {
    /// RK4 with `dt = 10⁻²·m/2`.
    pub fn for_game(game: &GameModel, horizon: f64) -> Self {
        Self {
            integrator: Integrator::Rk4,
            dt: 1e-2 * 0.5 * game.monotonicity_m(),
            horizon,
            record_every: 10,
            stop_tol: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be ≥ dt = {}", self.horizon, self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be positive".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Config(format!("stop_tol must be nonnegative, got {}", self.stop_tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub p: Vec<f64>,
    pub x_star: Vec<f64>,
    #[serde(rename = "V")]
    pub v: f64,
    pub grad_norm: f64,
    pub dist_to_pdagger: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    /// Integration stopped on `stop_tol` before the horizon.
    pub stopped_early: bool,
    pub steps: usize,
}

impl FlowTrajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.p.len());
        let mut head = vec!["t".to_string()];
        head.extend(output::indexed("p", n));
        head.extend(output::indexed("xstar", n));
        head.extend(["V", "grad_norm", "dist_to_pdagger"].map(String::from));
        writeln!(w, "{}", head.join(","))?;
        for s in &self.samples {
            let mut line = String::new();
            output::push_float(&mut line, s.t);
            output::push_floats(&mut line, &s.p);
            output::push_floats(&mut line, &s.x_star);
            output::push_floats(&mut line, &[s.v, s.grad_norm, s.dist_to_pdagger]);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = output::create(path)?;
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        output::write_json(path, self)
    }
}

struct FlowState {
    p: Vector,
    response: ResponseResult,
    grad: Vector,
}

impl IncentiveProblem {
    fn flow_state(&self, p: Vector, warm: &Vector) -> Result<FlowState> {
        let response = self.response(&p, Some(warm))?;
        if !response.interior {
            return Err(Error::LeftResponseDomain(format!(
                "response to p = {:?} reached the boundary",
                p.as_slice()
            )));
        }
        let grad = self.objective.grad_phi(&response.x_star);
        Ok(FlowState { p, response, grad })
    }

    fn flow_sample(&self, t: f64, s: &FlowState) -> FlowSample {
        FlowSample {
            t,
            p: s.p.iter().copied().collect(),
            x_star: s.response.x_star.iter().copied().collect(),
            v: self.objective.gap(&s.response.x_star),
            grad_norm: s.grad.norm(),
            dist_to_pdagger: (&s.p - self.p_dagger()).norm(),
        }
    }
}

/// Integrates `ṗ = ∇Φ(x*(p))` from `p0 ∈ P_c`.
pub fn integrate_social_gradient_flow(
    problem: &IncentiveProblem,
    p0: &Vector,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    cfg.validate()?;
    problem.game.space().check_dim(p0, "flow p0")?;
    let (inside, r0) = problem.membership(p0, None)?;
    if !inside {
        return Err(Error::Precondition(format!(
            "p0 = {:?} is not in P_c (c = {})",
            p0.as_slice(),
            problem.geometry.c
        )));
    }
    let mut state = FlowState {
        grad: problem.objective.grad_phi(&r0.x_star),
        p: p0.clone(),
        response: r0,
    };
    let mut samples = vec![problem.flow_sample(0.0, &state)];
    let total = (cfg.horizon / cfg.dt).ceil() as usize;
    let mut t = 0.0;
    let mut steps = 0;
    let mut stopped_early = false;

    while steps < total {
        if state.grad.norm() <= cfg.stop_tol {
            stopped_early = true;
            break;
        }
        let h = cfg.dt.min(cfg.horizon - t);
        let next = flow_step(problem, &state, h, cfg.integrator).map_err(|e| match e {
            Error::LeftResponseDomain(msg) => Error::LeftResponseDomain(format!(
                "{msg}; step from t = {t} with dt = {h} left P. Last valid state: p = {:?}, x* = {:?}",
                state.p.as_slice(),
                state.response.x_star.as_slice()
            )),
            other => other,
        })?;
        state = next;
        steps += 1;
        t = if steps == total { cfg.horizon } else { t + h };
        if steps % cfg.record_every == 0 || steps == total {
            samples.push(problem.flow_sample(t, &state));
        }
    }
    if stopped_early && samples.last().map(|s| s.t) != Some(t) {
        samples.push(problem.flow_sample(t, &state));
    }
    Ok(FlowTrajectory {
        samples,
        stopped_early,
        steps,
    })
}

fn flow_step(problem: &IncentiveProblem, s: &FlowState, h: f64, integrator: Integrator) -> Result<FlowState> {
    let warm = &s.response.x_star;
    match integrator {
        Integrator::ExplicitEuler => problem.flow_state(&s.p + &s.grad * h, warm),
        Integrator::Rk4 => {
            let k1 = &s.grad;
            let s2 = problem.flow_state(&s.p + k1 * (0.5 * h), warm)?;
            let s3 = problem.flow_state(&s.p + &s2.grad * (0.5 * h), &s2.response.x_star)?;
            let s4 = problem.flow_state(&s.p + &s3.grad * h, &s3.response.x_star)?;
            let incr = (k1 + &s2.grad * 2.0 + &s3.grad * 2.0 + &s4.grad) * (h / 6.0);
            problem.flow_state(&s.p + incr, &s4.response.x_star)
        }
    }
}
