//! Games over box strategy spaces and the incentivized pseudo-gradient.
//!
//! Every agent controls one scalar strategy, so a game with `n` agents lives
//! on a hyperrectangle in `ℝⁿ`. An incentive `p` enters each agent's cost as
//! the linear term `p_i x_i` and therefore shifts the nominal pseudo-gradient
//! additively: `G_p(x) = G0(x) + p`.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Relative distance (in units of the box diameter) below which a point is
/// treated as touching a face.
pub const INTERIOR_REL_TOL: f64 = 1e-6;

/// Hyperrectangle `[lower, upper]` with nonempty interior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dims("box bounds", lower.len(), upper.len()));
        }
        if lower.is_empty() {
            return Err(Error::Contract("box must have at least one coordinate".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Contract(format!(
                    "coordinate {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Distance threshold used to decide whether a point touches a face.
    pub fn interior_tolerance(&self) -> f64 {
        INTERIOR_REL_TOL * self.diameter()
    }

    pub fn center(&self) -> Vector {
        Vector::from_iterator(self.dim(), self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)))
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// True when `x` is at least [`interior_tolerance`](Self::interior_tolerance)
    /// away from every face.
    pub fn is_interior(&self, x: &Vector) -> bool {
        self.contains(x) && self.raw_boundary_distance(x) >= self.interior_tolerance()
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x, "project_box")?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(v, (l, u))| v.clamp(*l, *u)),
        )
    }

    /// `min_i min(x_i − lower_i, upper_i − x_i)`; zero exactly on the boundary.
    pub fn boundary_distance(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x, "boundary_distance")?;
        if !self.contains(x) {
            return Err(Error::Contract(format!(
                "boundary_distance: point {:?} lies outside the box",
                x.as_slice()
            )));
        }
        Ok(self.raw_boundary_distance(x))
    }

    pub(crate) fn raw_boundary_distance(&self, x: &Vector) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform tensor grid with `density` points per coordinate (corners included).
    pub fn grid(&self, density: usize) -> impl Iterator<Item = Vector> + '_ {
        let density = density.max(2);
        let n = self.dim();
        let total = density.pow(n as u32);
        (0..total).map(move |mut idx| {
            let mut x = Vector::zeros(n);
            for i in 0..n {
                let k = idx % density;
                idx /= density;
                let t = k as f64 / (density - 1) as f64;
                x[i] = self.lower[i] + t * (self.upper[i] - self.lower[i]);
            }
            x
        })
    }

    pub(crate) fn check_dim(&self, x: &Vector, context: &'static str) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dims(context, self.dim(), x.len()));
        }
        Ok(())
    }
}

/// Componentwise clamp of `x` into `space`.
pub fn project_box(x: &Vector, space: &BoxSpace) -> Result<Vector> {
    space.project(x)
}

/// Distance from `x` to the nearest face of `space`.
pub fn boundary_distance(x: &Vector, space: &BoxSpace) -> Result<f64> {
    space.boundary_distance(x)
}

/// The planner's incentive: a marginal cost per unit of strategy for each agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Incentive(Vector);

impl Incentive {
    pub fn new(p: Vector) -> Result<Self> {
        if !linalg::all_finite(&p) {
            return Err(Error::Contract(format!("incentive has non-finite entries: {:?}", p.as_slice())));
        }
        Ok(Self(p))
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        Self::new(Vector::from_column_slice(p))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Vector::zeros(n))
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn into_inner(self) -> Vector {
        self.0
    }
}

impl Deref for Incentive {
    type Target = Vector;
    fn deref(&self) -> &Vector {
        &self.0
    }
}

/// Nominal pseudo-gradient `G0` of a game, plus optional structure that some
/// solvers and learning rules can exploit.
pub trait PseudoGradient: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// `G0(x)`: each agent's partial derivative of its own nominal cost.
    fn eval(&self, x: &Vector) -> Vector;

    /// `DG0(x)`.
    fn jacobian(&self, x: &Vector) -> Matrix;

    /// Potential `Ψ_p(x)` with `∇Ψ_p = G0 + p`, for games with symmetric Jacobian.
    fn potential(&self, _x: &Vector, _p: &Vector) -> Option<f64> {
        None
    }

    /// Constant Jacobian `M` when `G0(x) = Mx`.
    fn linear_matrix(&self) -> Option<&Matrix> {
        None
    }

    /// `−M⁻¹p` from a stored factorization, for linear games.
    fn closed_form_response(&self, _p: &Vector) -> Option<Vector> {
        None
    }

    /// Unprojected joint best response to `x` under incentive `p`, when the
    /// game registers one.
    fn best_response(&self, _x: &Vector, _p: &Vector) -> Option<Vector> {
        None
    }

    /// Analytic lower bound on `λ_min(Sym(DG0(x)))` over the given box.
    fn analytic_monotonicity_bound(&self, _space: &BoxSpace) -> Option<f64> {
        None
    }
}

/// A game on a box strategy space with certified monotonicity constants.
#[derive(Clone)]
pub struct GameModel {
    name: String,
    space: BoxSpace,
    dynamics: Arc<dyn PseudoGradient>,
    monotonicity_m: f64,
    grid_m: f64,
    jac_bound: f64,
    lip_l1: f64,
    potential: bool,
}

impl fmt::Debug for GameModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("monotonicity_m", &self.monotonicity_m)
            .field("grid_m", &self.grid_m)
            .field("jac_bound", &self.jac_bound)
            .field("lip_l1", &self.lip_l1)
            .field("potential", &self.potential)
            .finish()
    }
}

/// Grid density used when scanning the Jacobian at construction time;
/// roughly 10⁵ points in total, odd so that the box center is sampled.
pub fn default_grid_density(n: usize) -> usize {
    let d = (1e5f64).powf(1.0 / n as f64).floor() as usize;
    let d = d.clamp(3, 401);
    if d % 2 == 0 {
        d - 1
    } else {
        d
    }
}

impl GameModel {
    /// Builds a game with a certified monotonicity constant `m`
    /// (`Sym(DG0) ⪰ m/2·I` on the box) and Jacobian Lipschitz constant `l1`.
    ///
    /// The Jacobian is scanned on a grid to record `L = max ‖DG0‖₂` and the
    /// grid-certified modulus.
    pub fn new(
        name: impl Into<String>,
        space: BoxSpace,
        dynamics: Arc<dyn PseudoGradient>,
        monotonicity_m: f64,
        lip_l1: f64,
    ) -> Result<Self> {
        if dynamics.dim() != space.dim() {
            return Err(Error::dims("game dynamics vs box", space.dim(), dynamics.dim()));
        }
        if !(monotonicity_m > 0.0 && monotonicity_m.is_finite()) {
            return Err(Error::Construction(format!(
                "monotonicity constant must be positive, got {monotonicity_m}"
            )));
        }
        if !(lip_l1 >= 0.0) {
            return Err(Error::Construction(format!("L1 must be nonnegative, got {lip_l1}")));
        }
        let (grid_min, jac_bound) = scan_jacobian(dynamics.as_ref(), &space, default_grid_density(space.dim()));
        Ok(Self {
            name: name.into(),
            space,
            dynamics,
            monotonicity_m,
            grid_m: 2.0 * grid_min,
            jac_bound,
            lip_l1,
            potential: false,
        })
    }

    /// Builds a game whose monotonicity constant is taken from a grid scan of
    /// `λ_min(Sym(DG0))`. Fails when the scan finds a non-positive value.
    pub fn with_grid_certificate(
        name: impl Into<String>,
        space: BoxSpace,
        dynamics: Arc<dyn PseudoGradient>,
        lip_l1: f64,
    ) -> Result<Self> {
        let (grid_min, _) = scan_jacobian(dynamics.as_ref(), &space, default_grid_density(space.dim()));
        if grid_min <= 0.0 {
            return Err(Error::Construction(format!(
                "grid scan finds min λ_min(Sym(DG0)) = {grid_min:.6} ≤ 0; the game is not strongly monotone"
            )));
        }
        Self::new(name, space, dynamics, 2.0 * grid_min, lip_l1)
    }

    /// Registers the potential solver. Only allowed when the Jacobian is
    /// symmetric at sampled points and the dynamics expose a potential.
    pub fn register_potential(mut self, samples: usize) -> Result<Self> {
        if !symmetry_check(&self, samples) {
            return Err(Error::Construction(format!(
                "game `{}` has a non-symmetric Jacobian; no potential exists",
                self.name
            )));
        }
        let c = self.space.center();
        if self.dynamics.potential(&c, &Vector::zeros(self.dim())).is_none() {
            return Err(Error::Construction(format!("game `{}` exposes no potential", self.name)));
        }
        self.potential = true;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &BoxSpace {
        &self.space
    }

    pub fn dynamics(&self) -> &dyn PseudoGradient {
        self.dynamics.as_ref()
    }

    /// Certified `m` with `Sym(DG0(x)) ⪰ m/2·I` on the whole box.
    pub fn monotonicity_m(&self) -> f64 {
        self.monotonicity_m
    }

    /// `2 · min_grid λ_min(Sym(DG0))`, recorded at construction.
    pub fn grid_m(&self) -> f64 {
        self.grid_m
    }

    /// Monotonicity modulus used for projected-gradient step admissibility:
    /// the sharper of the certified and grid-certified constants.
    pub fn step_modulus(&self) -> f64 {
        self.monotonicity_m.max(self.grid_m)
    }

    /// `L = max ‖DG0(x)‖₂` over the construction grid.
    pub fn jac_bound(&self) -> f64 {
        self.jac_bound
    }

    pub fn lip_l1(&self) -> f64 {
        self.lip_l1
    }

    /// Upper end `m/L²` of the admissible projected-gradient step interval.
    pub fn pg_step_limit(&self) -> f64 {
        self.step_modulus() / self.jac_bound.powi(2)
    }

    /// Contraction factor `ρ = (1 − ηm + η²L²)^{1/2}` of one projected-gradient step.
    pub fn pg_contraction(&self, eta: f64) -> f64 {
        let m = self.step_modulus();
        let l = self.jac_bound;
        (1.0 - eta * m + eta * eta * l * l).max(0.0).sqrt()
    }

    pub fn has_potential(&self) -> bool {
        self.potential
    }

    pub fn g0(&self, x: &Vector) -> Vector {
        self.dynamics.eval(x)
    }

    pub fn jac_g0(&self, x: &Vector) -> Matrix {
        self.dynamics.jacobian(x)
    }

    pub fn potential(&self, x: &Vector, p: &Vector) -> Option<f64> {
        if self.potential {
            self.dynamics.potential(x, p)
        } else {
            None
        }
    }

    pub fn linear_matrix(&self) -> Option<&Matrix> {
        self.dynamics.linear_matrix()
    }

    /// Projected joint best response, or an unsupported-rule error.
    pub fn best_response(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        self.space.check_dim(x, "best_response x")?;
        self.space.check_dim(p, "best_response p")?;
        let br = self.dynamics.best_response(x, p).ok_or_else(|| Error::UnsupportedRule {
            rule: "best-response".into(),
            game: self.name.clone(),
        })?;
        Ok(self.space.project_unchecked(&br))
    }

    /// `G0(x) + p`.
    pub fn incentivized_pseudo_gradient(&self, x: &Vector, p: &Vector) -> Result<Vector> {
        self.space.check_dim(x, "incentivized_pseudo_gradient x")?;
        self.space.check_dim(p, "incentivized_pseudo_gradient p")?;
        Ok(self.g0(x) + p)
    }
}

/// `G0(x) + p` for `game`.
pub fn incentivized_pseudo_gradient(game: &GameModel, x: &Vector, p: &Incentive) -> Result<Vector> {
    game.incentivized_pseudo_gradient(x, p)
}

/// Returns `(min λ_min(Sym(DG0)), max ‖DG0‖₂)` over a grid.
pub fn scan_jacobian(dynamics: &dyn PseudoGradient, space: &BoxSpace, density: usize) -> (f64, f64) {
    if let Some(m) = dynamics.linear_matrix() {
        return (linalg::lambda_min_sym(m), linalg::spectral_norm(m));
    }
    space.grid(density).fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
        let j = dynamics.jacobian(&x);
        (lo.min(linalg::lambda_min_sym(&j)), hi.max(linalg::spectral_norm(&j)))
    })
}

/// True iff `‖DG0(x) − DG0(x)ᵀ‖ ≤ 1e-10` at `samples` grid points per axis
/// (at least 2).
pub fn symmetry_check(game: &GameModel, samples: usize) -> bool {
    game.space
        .grid(samples.max(2))
        .all(|x| {
            let j = game.jac_g0(&x);
            (&j - j.transpose()).amax() <= 1e-10
        })
}

/// Outcome of a grid scan of the monotonicity condition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub grid_density: usize,
    pub grid_points: usize,
    /// `min_grid λ_min(Sym(DG0(x)))`.
    pub grid_min_eigenvalue: f64,
    pub grid_argmin: Vec<f64>,
    /// `min_grid` of the Gershgorin lower bound of `Sym(DG0(x))`.
    pub grid_gershgorin_min: f64,
    /// Analytic lower bound on `λ_min(Sym(DG0))` registered by the game, if any.
    pub analytic_bound: Option<f64>,
    /// `m/2` for the game's certified `m`.
    pub required: f64,
    pub passed: bool,
    /// `max_grid ‖DG0‖₂`.
    pub jac_bound_estimate: f64,
    /// Max of `‖DG0(x) − DG0(y)‖₂ / ‖x − y‖` over neighbouring grid points.
    pub l1_estimate: f64,
}

/// Scans a uniform grid with `grid_density` points per coordinate and checks
/// `λ_min(Sym(DG0(x))) ≥ m/2` against the game's certified `m`.
pub fn certify_strong_monotonicity(game: &GameModel, grid_density: usize) -> Result<CertificateReport> {
    if grid_density < 2 {
        return Err(Error::Config(format!("grid density must be ≥ 2, got {grid_density}")));
    }
    let space = game.space();
    let n = game.dim();
    let mut min_eig = f64::INFINITY;
    let mut argmin = space.center();
    let mut gersh = f64::INFINITY;
    let mut jac_bound = 0.0f64;
    let mut l1 = 0.0f64;
    let mut points = 0usize;
    let steps: Vec<f64> = (0..n)
        .map(|i| (space.upper()[i] - space.lower()[i]) / (grid_density - 1) as f64)
        .collect();

    for x in space.grid(grid_density) {
        points += 1;
        let j = game.jac_g0(&x);
        let s = linalg::sym(&j);
        let lmin = linalg::sym_eigenvalues(&s)[0];
        if lmin < min_eig {
            min_eig = lmin;
            argmin = x.clone();
        }
        gersh = gersh.min(linalg::gershgorin_lower(&s));
        jac_bound = jac_bound.max(linalg::spectral_norm(&j));
        // forward neighbours along each axis
        for i in 0..n {
            let mut y = x.clone();
            y[i] += steps[i];
            if y[i] <= space.upper()[i] + 1e-12 {
                let diff = linalg::spectral_norm(&(game.jac_g0(&y) - &j));
                l1 = l1.max(diff / steps[i]);
            }
        }
    }
    let required = 0.5 * game.monotonicity_m();
    Ok(CertificateReport {
        grid_density,
        grid_points: points,
        grid_min_eigenvalue: min_eig,
        grid_argmin: argmin.iter().copied().collect(),
        grid_gershgorin_min: gersh,
        analytic_bound: game.dynamics().analytic_monotonicity_bound(space),
        required,
        passed: min_eig >= required - 1e-12,
        jac_bound_estimate: jac_bound,
        l1_estimate: l1,
    })
}
