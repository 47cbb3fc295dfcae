//! Numerical checks of the structural properties the method relies on:
//! strong monotonicity, the response-map bounds, Lyapunov descent, the
//! learning-rule contraction rates and the step-size laws.
//!
//! Each check returns a [`Check`] holding the measured quantity, the bound it
//! is compared against and the verdict.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BoxSpace, GameModel, Incentive};
use crate::linalg::{self, Matrix, Vector};
use crate::planner::{lyapunov_derivative, IncentiveProblem};
use crate::solver::{projected_gradient_image, response_jacobian_fd};
use crate::ttsa::{LearningRule, StepSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, measured: f64, bound: f64, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            passed,
            detail: detail.into(),
        }
    }

    /// `measured ≤ bound`.
    fn at_most(name: &str, measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self::new(name, measured, bound, measured <= bound, detail)
    }

    /// `measured ≥ bound`.
    fn at_least(name: &str, measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self::new(name, measured, bound, measured >= bound, detail)
    }
}

/// Uniform point in the box shrunk by `margin` (relative to each side length).
pub fn sample_box<R: Rng + ?Sized>(space: &BoxSpace, rng: &mut R, margin: f64) -> Vector {
    Vector::from_fn(space.dim(), |i, _| {
        let (lo, hi) = (space.lower()[i], space.upper()[i]);
        let d = margin * (hi - lo);
        rng.gen_range((lo + d)..(hi - d))
    })
}

/// Uniform `x̄` in `{x ∈ int X : Φ(x) − Φ(x†) ≤ c}` by rejection.
pub fn sample_sublevel_point<R: Rng + ?Sized>(problem: &IncentiveProblem, rng: &mut R) -> Result<Vector> {
    let space = problem.game().space();
    let c = problem.geometry().c;
    for _ in 0..10_000_000 {
        let x = sample_box(space, rng, 0.0);
        if space.is_interior(&x) && problem.objective().gap(&x) <= c {
            return Ok(x);
        }
    }
    Err(Error::SamplingRate { rate: 0.0 })
}

fn incentive_for(game: &GameModel, x: &Vector) -> Vector {
    -game.g0(x)
}

/// `(x − y)ᵀ(G0(x) − G0(y)) / ‖x − y‖² ≥ m/2` on random pairs.
pub fn check_monotone_pairs<R: Rng + ?Sized>(game: &GameModel, rng: &mut R, pairs: usize) -> Check {
    let mut worst = f64::INFINITY;
    for _ in 0..pairs {
        let x = sample_box(game.space(), rng, 0.0);
        let y = sample_box(game.space(), rng, 0.0);
        let d = &x - &y;
        let dd = d.norm_squared();
        if dd > 0.0 {
            worst = worst.min(d.dot(&(game.g0(&x) - game.g0(&y))) / dd);
        }
    }
    let bound = 0.5 * game.monotonicity_m();
    Check::at_least("strong monotonicity (random pairs)", worst, bound - 1e-12, format!("{pairs} pairs"))
}

/// Relative error of `DG0` against central differences with `h = 1e-6·diam`.
pub fn check_jacobian_fd<R: Rng + ?Sized>(game: &GameModel, rng: &mut R, points: usize) -> Check {
    let h = 1e-6 * game.space().diameter();
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = sample_box(game.space(), rng, 1e-3);
        let j = game.jac_g0(&x);
        let fd = linalg::central_jacobian(|y| game.g0(y), &x, h);
        worst = worst.max((&j - fd).norm() / j.norm().max(1e-300));
    }
    Check::at_most("jacobian vs finite differences", worst, 1e-5, format!("{points} points, h = {h:.1e}"))
}

/// `x*(−G0(x̄)) = x̄` within `10·tol`.
pub fn check_round_trip<R: Rng + ?Sized>(problem: &IncentiveProblem, rng: &mut R, n: usize) -> Result<Check> {
    let game = problem.game();
    let mut worst = 0.0f64;
    for _ in 0..n {
        let x = sample_box(game.space(), rng, 1e-3);
        let r = problem.response(&incentive_for(game, &x), None)?;
        worst = worst.max((&r.x_star - &x).norm());
    }
    let tol = problem.solver().tol;
    Ok(Check::at_most("response round trip", worst, 10.0 * tol, format!("{n} points")))
}

fn random_incentive<R: Rng + ?Sized>(game: &GameModel, rng: &mut R) -> Vector {
    incentive_for(game, &sample_box(game.space(), rng, 0.02))
}

/// `‖x*(p₁) − x*(p₂)‖ / ‖p₁ − p₂‖ ≤ 2/m`.
pub fn check_response_lipschitz<R: Rng + ?Sized>(problem: &IncentiveProblem, rng: &mut R, pairs: usize) -> Result<Check> {
    let game = problem.game();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (p1, p2) = (random_incentive(game, rng), random_incentive(game, rng));
        let x1 = problem.response(&p1, None)?.x_star;
        let x2 = problem.response(&p2, None)?.x_star;
        worst = worst.max((x1 - x2).norm() / (p1 - p2).norm());
    }
    let bound = 2.0 / game.monotonicity_m();
    Ok(Check::at_most("response Lipschitz ratio", worst, bound + 1e-6, format!("{pairs} pairs")))
}

fn fd_jacobian(problem: &IncentiveProblem, p: &Vector, h: f64) -> Result<Matrix> {
    response_jacobian_fd(problem.game(), &Incentive::new(p.clone())?, problem.solver(), h)
}

/// Symmetrized response Jacobian is negative definite and its singular
/// values lie in `[1/L, 2/m]`.
pub fn check_response_jacobian<R: Rng + ?Sized>(
    problem: &IncentiveProblem,
    rng: &mut R,
    n: usize,
    h: f64,
) -> Result<Vec<Check>> {
    let game = problem.game();
    let (mut max_eig, mut smin, mut smax) = (f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
    for _ in 0..n {
        let p = random_incentive(game, rng);
        let j = fd_jacobian(problem, &p, h)?;
        max_eig = max_eig.max(linalg::lambda_max_sym(&j));
        let sv = linalg::singular_values(&j);
        smin = smin.min(sv[0]);
        smax = smax.max(*sv.last().expect("non-empty"));
    }
    let s1 = 1.0 / game.jac_bound();
    let s2 = 2.0 / game.monotonicity_m();
    Ok(vec![
        Check::new("Sym(Dx*) negative definite", max_eig, 0.0, max_eig < 0.0, format!("{n} points")),
        Check::at_least("smallest singular value of Dx*", smin, s1 - 1e-4, "bound 1/max‖DG0‖"),
        Check::at_most("largest singular value of Dx*", smax, s2 + 1e-4, "bound 2/m"),
    ])
}

/// `‖Dx*(p₁) − Dx*(p₂)‖₂ / ‖p₁ − p₂‖ ≤ 8 L1/m³`; for linear games the
/// difference itself must vanish.
pub fn check_jacobian_lipschitz<R: Rng + ?Sized>(
    problem: &IncentiveProblem,
    rng: &mut R,
    pairs: usize,
    h: f64,
) -> Result<Check> {
    let game = problem.game();
    let linear = game.lip_l1() == 0.0;
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (p1, p2) = (random_incentive(game, rng), random_incentive(game, rng));
        let diff = linalg::spectral_norm(&(fd_jacobian(problem, &p1, h)? - fd_jacobian(problem, &p2, h)?));
        worst = worst.max(if linear { diff } else { diff / (p1 - p2).norm() });
    }
    Ok(if linear {
        Check::at_most("Dx* constant (linear game)", worst, 1e-8, format!("{pairs} pairs"))
    } else {
        let m = game.monotonicity_m();
        let bound = 8.0 * game.lip_l1() / m.powi(3);
        Check::at_most("Dx* Lipschitz ratio", worst, bound + 1e-4, format!("{pairs} pairs, bound 8L1/m³"))
    })
}

/// `dV/dt < 0` at random `p ∈ P_c` away from `p†`.
pub fn check_descent_sign<R: Rng + ?Sized>(problem: &IncentiveProblem, rng: &mut R, n: usize, h: f64) -> Result<Check> {
    let game = problem.game();
    let pd = problem.p_dagger();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    while count < n {
        let p = incentive_for(game, &sample_sublevel_point(problem, rng)?);
        if (&p - &pd).norm() < 1e-3 {
            continue;
        }
        worst = worst.max(lyapunov_derivative(problem, &p, h)?);
        count += 1;
    }
    Ok(Check::new("Lyapunov derivative sign", worst, -1e-12, worst < -1e-12, format!("{n} points in P_c")))
}

/// One-step PG contraction `‖f(x,p) − x*(p)‖ ≤ ρ ‖x − x*(p)‖`.
pub fn check_pg_contraction<R: Rng + ?Sized>(problem: &IncentiveProblem, rng: &mut R, n: usize, eta: f64) -> Result<Check> {
    let game = problem.game();
    let rho = game.pg_contraction(eta);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = random_incentive(game, rng);
        let xs = problem.response(&p, None)?.x_star;
        let x = sample_box(game.space(), rng, 0.0);
        let e0 = (&x - &xs).norm();
        if e0 > 0.0 {
            worst = worst.max((projected_gradient_image(game, &x, &p, eta) - &xs).norm() / e0);
        }
    }
    Ok(Check::at_most(
        "PG contraction ratio",
        worst,
        rho + 1e-8,
        format!("{n} samples, η = {eta:.4e}, ρ = {rho:.6}"),
    ))
}

/// BR error flow `e(t) = exp(−Q⁻¹M t) e₀` against `exp(−λ_min(Sym(Q⁻¹M)) t)`
/// on `t ∈ [0, 5]`, with 5% slack. Linear games only.
pub fn check_br_rate<R: Rng + ?Sized>(game: &GameModel, rng: &mut R, n: usize) -> Result<Check> {
    let m = game.linear_matrix().ok_or_else(|| Error::UnsupportedRule {
        rule: "best-response".into(),
        game: game.name().into(),
    })?;
    let a = Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / m[(i, i)]);
    let rate = linalg::lambda_min_sym(&a);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let e0 = Vector::from_fn(m.nrows(), |_, _| rng.gen_range(-1.0..1.0));
        for step in 1..=100 {
            let t = 0.05 * step as f64;
            let et = (-&a * t).exp() * &e0;
            worst = worst.max(et.norm() / (e0.norm() * (-rate * t).exp()));
        }
    }
    Ok(Check::at_most(
        "BR error decay vs rate bound",
        worst,
        1.05,
        format!("rate λ_min(Sym(Q⁻¹M)) = {rate:.6}, t ∈ [0, 5]"),
    ))
}

/// Partial sums over `terms` steps: `Σ a_k`, `Σ β_k` exceed the integral
/// lower bound, `Σ a_k²`, `Σ β_k²` stay below `f(0) + ∫ f²`.
pub fn check_schedule_laws(s: &StepSchedule, terms: u64) -> Vec<Check> {
    let off = s.offset as f64;
    let integral = |c: f64, e: f64, from: f64, to: f64| -> f64 {
        if (e - 1.0).abs() < 1e-15 {
            c * (to / from).ln()
        } else {
            c * (to.powf(1.0 - e) - from.powf(1.0 - e)) / (1.0 - e)
        }
    };
    let tail_sq = |c: f64, e: f64| c * c * (off.powf(-2.0 * e) + off.powf(1.0 - 2.0 * e) / (2.0 * e - 1.0));
    let (mut sa, mut sb, mut sa2, mut sb2) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..terms {
        let (a, b) = (s.a(k), s.beta(k));
        sa += a;
        sb += b;
        sa2 += a * a;
        sb2 += b * b;
    }
    let end = terms as f64 + off;
    vec![
        Check::at_least("Σ a_k partial sum", sa, integral(s.a0, s.a_exp, off, end), format!("{terms} terms")),
        Check::at_least("Σ β_k partial sum", sb, integral(s.b0, s.b_exp, off, end), format!("{terms} terms")),
        Check::at_most("Σ a_k² partial sum", sa2, tail_sq(s.a0, s.a_exp), "integral bound of the full series"),
        Check::at_most("Σ β_k² partial sum", sb2, tail_sq(s.b0, s.b_exp), "integral bound of the full series"),
        Check::new(
            "β_k / a_k decreasing",
            s.beta(terms) / s.a(terms),
            s.beta(0) / s.a(0),
            s.b_exp > s.a_exp,
            "timescale separation",
        ),
    ]
}

/// Iterates `x ← x + a(f(x,p) − x)` at fixed `p` and compares the error to
/// the per-step factor implied by the rule's certificate.
pub fn check_learning_certificate<R: Rng + ?Sized>(
    problem: &IncentiveProblem,
    rule: &LearningRule,
    rng: &mut R,
    n: usize,
) -> Result<Check> {
    let game = problem.game();
    let a = 0.1;
    let factor = match rule {
        LearningRule::Ne => 1.0 - a,
        LearningRule::Pg { eta } => 1.0 - a * (1.0 - game.pg_contraction(*eta)),
        LearningRule::Br => {
            let m = game.linear_matrix().ok_or_else(|| Error::UnsupportedRule {
                rule: "best-response".into(),
                game: game.name().into(),
            })?;
            let qm = Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / m[(i, i)]);
            let r = linalg::lambda_min_sym(&qm);
            if r <= 0.0 {
                return Ok(Check::new(
                    "learning-rule exponential certificate (br)",
                    r,
                    0.0,
                    false,
                    "λ_min(Sym(Q⁻¹M)) ≤ 0; no Euclidean certificate",
                ));
            }
            (1.0 - 2.0 * a * r + a * a * linalg::spectral_norm(&qm).powi(2)).sqrt()
        }
    };
    let mut worst = 0.0f64;
    let mut reached = true;
    for _ in 0..n {
        let p = incentive_for(game, &sample_sublevel_point(problem, rng)?);
        let xs = problem.response(&p, None)?.x_star;
        let mut x = sample_box(game.space(), rng, 0.0);
        let e0 = (&x - &xs).norm();
        let mut envelope = e0;
        let mut k = 0;
        while (&x - &xs).norm() > 1e-10 && k < 5_000_000 {
            let f = match rule {
                LearningRule::Ne => xs.clone(),
                LearningRule::Br => game.best_response(&x, &p)?,
                LearningRule::Pg { eta } => projected_gradient_image(game, &x, &p, *eta),
            };
            x = &x + (f - &x) * a;
            envelope *= factor;
            k += 1;
            let e = (&x - &xs).norm();
            worst = worst.max((e - 1e-13) / envelope);
        }
        reached &= (&x - &xs).norm() <= 1e-10;
    }
    Ok(Check::new(
        &format!("learning-rule exponential certificate ({})", rule.name()),
        worst,
        1.0,
        reached && worst <= 1.0 + 1e-9,
        format!("{n} fixed incentives, relaxation a = {a}, per-step factor {factor:.6}"),
    ))
}
