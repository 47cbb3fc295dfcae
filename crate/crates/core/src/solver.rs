//! Incentivized Nash equilibrium response `x*(p)`.
//!
//! The equilibrium solves the variational inequality
//! `(G0(x*) + p)ᵀ(x − x*) ≥ 0` over the box. Three methods are provided:
//! a direct linear solve for games with `G0(x) = Mx`, projected Newton on the
//! potential `Ψ_p` for games with symmetric Jacobian, and the projected-gradient
//! fixed point `x ← Π(x − η(G0(x) + p))` for everything else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameModel, Incentive};
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    ClosedFormLinear,
    ProjectedGradientFixedPoint,
    PotentialMinimization,
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSolverConfig {
    pub method: SolverMethod,
    /// Residual tolerance on `‖G0(x) + p‖₂`.
    pub tol: f64,
    pub max_iter: usize,
    /// Projected-gradient step; must lie in `(0, m/L²)`.
    pub step_eta: f64,
}

impl ResponseSolverConfig {
    /// Picks the method from the game's structure; step `η = m/(2L²)`.
    pub fn for_game(game: &GameModel) -> Self {
        let method = if game.linear_matrix().is_some() {
            SolverMethod::ClosedFormLinear
        } else if game.has_potential() {
            SolverMethod::PotentialMinimization
        } else {
            SolverMethod::ProjectedGradientFixedPoint
        };
        Self {
            method,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            step_eta: 0.5 * game.pg_step_limit(),
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self, game: &GameModel) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be positive".into()));
        }
        let limit = game.pg_step_limit();
        if !(self.step_eta > 0.0 && self.step_eta < limit) {
            return Err(Error::Config(format!(
                "solver step η = {} outside (0, m/L²) = (0, {limit})",
                self.step_eta
            )));
        }
        match self.method {
            SolverMethod::ClosedFormLinear if game.linear_matrix().is_none() => Err(Error::Config(format!(
                "closed-form-linear needs a linear game; `{}` is not",
                game.name()
            ))),
            SolverMethod::PotentialMinimization if !game.has_potential() => Err(Error::Config(format!(
                "potential-minimization needs a registered potential; `{}` has none",
                game.name()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseResult {
    pub x_star: Vector,
    /// `‖G0(x*) + p‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `x*` is at least the box's interior tolerance away from every face.
    pub interior: bool,
}

/// Projected-gradient image `Π(x − η(G0(x) + p))`. No step-size check.
pub fn projected_gradient_image(game: &GameModel, x: &Vector, p: &Vector, eta: f64) -> Vector {
    let g = game.g0(x) + p;
    game.space().project_unchecked(&(x - g * eta))
}

/// Stationarity test: interior residual when the iterate is at least `tol`
/// from every face, fixed-point displacement `≤ η·tol` otherwise.
fn is_stationary(game: &GameModel, x: &Vector, g: &Vector, tol: f64, eta: f64) -> bool {
    if game.space().raw_boundary_distance(x) >= tol {
        g.norm() <= tol
    } else {
        let moved = game.space().project_unchecked(&(x - g * eta));
        (x - moved).norm() <= eta * tol
    }
}

fn finish(game: &GameModel, x: Vector, p: &Vector, iterations: usize) -> ResponseResult {
    let residual = (game.g0(&x) + p).norm();
    let interior = game.space().is_interior(&x);
    ResponseResult {
        x_star: x,
        residual,
        iterations,
        converged: true,
        interior,
    }
}

/// Incentivized equilibrium `x*(p)` by the configured method, optionally warm
/// started from a previous response.
pub fn solve_response(
    game: &GameModel,
    p: &Incentive,
    cfg: &ResponseSolverConfig,
    warm: Option<&Vector>,
) -> Result<ResponseResult> {
    game.space().check_dim(p, "solve_response p")?;
    if let Some(w) = warm {
        game.space().check_dim(w, "solve_response warm start")?;
    }
    match cfg.method {
        SolverMethod::ClosedFormLinear => {
            let m = game.linear_matrix().ok_or_else(|| {
                Error::Config(format!("closed-form-linear needs a linear game; `{}` is not", game.name()))
            })?;
            let x = match game.dynamics().closed_form_response(p) {
                Some(x) => x,
                None => solve_response_linear(m, p)?,
            };
            if game.space().is_interior(&x) {
                Ok(finish(game, x, p, 1))
            } else {
                // boundary equilibrium: the unconstrained solution left the box
                let start = game.space().project_unchecked(&x);
                solve_response_projected(game, p, cfg, Some(&start))
            }
        }
        SolverMethod::PotentialMinimization => solve_response_potential(game, p, cfg, warm),
        SolverMethod::ProjectedGradientFixedPoint => solve_response_projected(game, p, cfg, warm),
    }
}

/// Solution of `Mx = −p` by LU with partial pivoting.
pub fn solve_response_linear(m: &Matrix, p: &Vector) -> Result<Vector> {
    if !m.is_square() {
        return Err(Error::dims("solve_response_linear (square M)", m.nrows(), m.ncols()));
    }
    if m.nrows() != p.len() {
        return Err(Error::dims("solve_response_linear p", m.nrows(), p.len()));
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let dmax = diag.amax();
    let dmin = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(dmax > 0.0) || dmin <= 1e-13 * dmax {
        return Err(Error::Singular(format!(
            "pivot ratio {:.3e}; the game is not strongly monotone",
            if dmax > 0.0 { dmin / dmax } else { 0.0 }
        )));
    }
    lu.solve(&(-p))
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

/// Projected-gradient fixed-point iteration with step `cfg.step_eta`.
pub fn solve_response_projected(
    game: &GameModel,
    p: &Incentive,
    cfg: &ResponseSolverConfig,
    warm: Option<&Vector>,
) -> Result<ResponseResult> {
    let eta = cfg.step_eta;
    let space = game.space();
    let mut x = match warm {
        Some(w) => space.project_unchecked(w),
        None => space.center(),
    };
    for it in 0..cfg.max_iter {
        let g = game.g0(&x) + p.as_vector();
        if is_stationary(game, &x, &g, cfg.tol, eta) {
            return Ok(finish(game, x, p, it));
        }
        x = space.project_unchecked(&(&x - g * eta));
    }
    let residual = (game.g0(&x) + p.as_vector()).norm();
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual,
        last: x.iter().copied().collect(),
    })
}

/// Minimizes `Ψ_p` over the box by projected Newton with an Armijo search
/// along the projection arc. Requires a registered potential.
pub fn solve_response_potential(
    game: &GameModel,
    p: &Incentive,
    cfg: &ResponseSolverConfig,
    warm: Option<&Vector>,
) -> Result<ResponseResult> {
    if !game.has_potential() {
        return Err(Error::Precondition(format!(
            "game `{}` has no registered potential",
            game.name()
        )));
    }
    let space = game.space();
    let n = game.dim();
    let psi = |x: &Vector| game.potential(x, p).expect("potential registered");
    let mut x = match warm {
        Some(w) => space.project_unchecked(w),
        None => space.center(),
    };
    for it in 0..cfg.max_iter {
        let g = game.g0(&x) + p.as_vector();
        if is_stationary(game, &x, &g, cfg.tol, cfg.step_eta) {
            return Ok(finish(game, x, p, it));
        }

        // Coordinates pinned at a face with the gradient pushing outward.
        let active: Vec<bool> = (0..n)
            .map(|i| {
                let w = space.upper()[i] - space.lower()[i];
                let at_lo = x[i] - space.lower()[i] <= 1e-14 * w && g[i] > 0.0;
                let at_hi = space.upper()[i] - x[i] <= 1e-14 * w && g[i] < 0.0;
                at_lo || at_hi
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();

        let mut d = -&g;
        if !free.is_empty() {
            let h = game.jac_g0(&x);
            let hff = Matrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let gf = Vector::from_fn(free.len(), |a, _| g[free[a]]);
            if let Some(chol) = nalgebra::Cholesky::new(hff) {
                let df = chol.solve(&(-gf));
                for (a, &i) in free.iter().enumerate() {
                    d[i] = df[a];
                }
            }
        }

        let psi0 = psi(&x);
        let pres = |y: &Vector, gy: &Vector| (y - space.project_unchecked(&(y - gy * cfg.step_eta))).norm();
        let r0 = pres(&x, &g);
        let mut alpha = 1.0;
        let mut next = None;
        while alpha > 1e-12 {
            let cand = space.project_unchecked(&(&x + &d * alpha));
            let decrease = g.dot(&(&cand - &x));
            if psi(&cand) <= psi0 + 1e-4 * decrease {
                next = Some(cand);
                break;
            }
            // Near the solution Ψ differences drown in round-off; fall back
            // to projected-residual decrease for full steps.
            if alpha == 1.0 && pres(&cand, &(game.g0(&cand) + p.as_vector())) < 0.5 * r0 {
                next = Some(cand);
                break;
            }
            alpha *= 0.5;
        }
        x = next.unwrap_or_else(|| projected_gradient_image(game, &x, p, cfg.step_eta));
    }
    let residual = (game.g0(&x) + p.as_vector()).norm();
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual,
        last: x.iter().copied().collect(),
    })
}

/// Central finite-difference Jacobian of `p ↦ x*(p)` with step `h`.
/// Every probe `p ± h·e_i` must have an interior response.
pub fn response_jacobian_fd(
    game: &GameModel,
    p: &Incentive,
    cfg: &ResponseSolverConfig,
    h: f64,
) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let base = solve_response(game, p, cfg, None)?;
    if !base.interior {
        return Err(Error::LeftResponseDomain(format!(
            "response to p = {:?} is on the boundary",
            p.as_slice()
        )));
    }
    let n = game.dim();
    let mut jac = Matrix::zeros(n, n);
    for j in 0..n {
        let mut cols = [Vector::zeros(n), Vector::zeros(n)];
        for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut probe = p.as_vector().clone();
            probe[j] += sign * h;
            let probe = Incentive::new(probe)?;
            let r = solve_response(game, &probe, cfg, Some(&base.x_star))?;
            if !r.interior {
                return Err(Error::LeftResponseDomain(format!(
                    "probe p {} h·e_{j} = {:?} has a boundary response",
                    if sign > 0.0 { "+" } else { "−" },
                    probe.as_slice()
                )));
            }
            cols[slot] = r.x_star;
        }
        jac.set_column(j, &((&cols[0] - &cols[1]) / (2.0 * h)));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{self, AggregativeGameSpec, OscillatorGameSpec};

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn linear_examples() {
        let id = Matrix::identity(3, 3);
        assert_eq!(solve_response_linear(&id, &v(&[1.0, 1.0, 1.0])).unwrap(), v(&[-1.0, -1.0, -1.0]));
        let d = Matrix::from_diagonal(&v(&[2.0, 4.0]));
        assert_eq!(solve_response_linear(&d, &v(&[1.0, -2.0])).unwrap(), v(&[-0.5, 0.5]));
        let sing = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve_response_linear(&sing, &v(&[1.0, 0.0])), Err(Error::Singular(_))));
    }

    #[test]
    fn zero_incentive_gives_origin_on_linear_game() {
        let g = games::preset(games::PRESET_AGGREGATIVE).unwrap().game;
        let cfg = ResponseSolverConfig::for_game(&g);
        let r = solve_response(&g, &Incentive::zeros(5), &cfg, None).unwrap();
        assert!(r.x_star.norm() < 1e-15);
        assert!(r.converged && r.interior);
    }

    #[test]
    fn decoupled_game_solves_per_coordinate() {
        let mut spec = AggregativeGameSpec::default();
        spec.a = 0.0;
        let g = games::build_aggregative(&spec).unwrap();
        let p = Incentive::from_slice(&[0.3, -0.2, 0.1, 0.5, -0.4]).unwrap();
        for method in [SolverMethod::ClosedFormLinear, SolverMethod::ProjectedGradientFixedPoint] {
            let cfg = ResponseSolverConfig::for_game(&g).with_method(method);
            let r = solve_response(&g, &p, &cfg, None).unwrap();
            for i in 0..5 {
                assert!((r.x_star[i] + p[i] / spec.q[i]).abs() < 1e-9, "{method:?}");
            }
        }
    }

    #[test]
    fn oscillator_origin_for_zero_incentive() {
        let g = games::build_oscillator(&OscillatorGameSpec::default()).unwrap();
        let cfg = ResponseSolverConfig::for_game(&g);
        assert_eq!(cfg.method, SolverMethod::PotentialMinimization);
        let r = solve_response(&g, &Incentive::zeros(2), &cfg, None).unwrap();
        assert!(r.x_star.norm() < 1e-12);
    }

    #[test]
    fn boundary_response_is_flagged() {
        let g = games::build_oscillator(&OscillatorGameSpec::default()).unwrap();
        let cfg = ResponseSolverConfig::for_game(&g);
        let r = solve_response(&g, &Incentive::from_slice(&[-20.0, 20.0]).unwrap(), &cfg, None).unwrap();
        assert!(r.converged);
        assert!(!r.interior);
        assert!(r.residual > cfg.tol);
        let b = std::f64::consts::FRAC_PI_3;
        assert!((r.x_star[0] - b).abs() < 1e-12 && (r.x_star[1] + b).abs() < 1e-12);
    }

    #[test]
    fn method_mismatch_is_config_error() {
        let g = games::build_oscillator(&OscillatorGameSpec::default()).unwrap();
        let cfg = ResponseSolverConfig::for_game(&g).with_method(SolverMethod::ClosedFormLinear);
        assert!(matches!(cfg.validate(&g), Err(Error::Config(_))));
        let agg = games::preset(games::PRESET_AGGREGATIVE).unwrap().game;
        let cfg = ResponseSolverConfig::for_game(&agg).with_method(SolverMethod::PotentialMinimization);
        assert!(cfg.validate(&agg).is_err());
        let mut cfg = ResponseSolverConfig::for_game(&agg);
        cfg.step_eta = agg.pg_step_limit();
        assert!(cfg.validate(&agg).is_err());
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let g = games::build_oscillator(&OscillatorGameSpec::default()).unwrap();
        let mut cfg = ResponseSolverConfig::for_game(&g).with_method(SolverMethod::ProjectedGradientFixedPoint);
        cfg.max_iter = 3;
        let err = solve_response(&g, &Incentive::from_slice(&[-1.0, 1.0]).unwrap(), &cfg, None).unwrap_err();
        match err {
            Error::NonConvergence { iterations, last, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 2);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fd_probe_outside_domain_is_reported() {
        let g = games::build_oscillator(&OscillatorGameSpec::default()).unwrap();
        let cfg = ResponseSolverConfig::for_game(&g);
        // response right next to the upper-right corner
        let b = std::f64::consts::FRAC_PI_3 - 1e-4;
        let p = Incentive::new(-g.g0(&v(&[b, b]))).unwrap();
        let err = response_jacobian_fd(&g, &p, &cfg, 1e-2).unwrap_err();
        assert!(matches!(err, Error::LeftResponseDomain(_)), "{err}");
    }

    #[test]
    fn potential_solver_handles_face_solution_from_warm_start() {
        let g = games::build_oscillator(&OscillatorGameSpec::default()).unwrap();
        let cfg = ResponseSolverConfig::for_game(&g);
        let p = Incentive::new(v(&[-3.326562209101527, -3.4971080719130927])).unwrap();
        let warm = v(&[1.018452270877212, 0.6153528992042425]);
        let r = solve_response_potential(&g, &p, &cfg, Some(&warm)).unwrap();
        let reference = solve_response_projected(&g, &p, &cfg, None).unwrap();
        assert_eq!(r.x_star[0], g.space().upper()[0]);
        assert!((&r.x_star - &reference.x_star).norm() < 1e-8);
        assert!(!r.interior);
    }
}
