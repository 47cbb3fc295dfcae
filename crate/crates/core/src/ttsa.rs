//! Two-timescale strategy–incentive iteration.
//!
//! ```text
//! x_{k+1} = x_k + a_k (f(x_k, p_k) − x_k)
//! p_{k+1} = p_k + β_k ∇Φ(x_k) · 1{p_k + β_k ∇Φ(x_k) ∈ P_c}
//! ```
//!
//! Agents move on the fast timescale `a_k`, the planner on the slow one
//! `β_k = o(a_k)`. The indicator replaces a projection onto the nonconvex
//! set `P_c`; membership is decided by an inner equilibrium solve.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameModel;
use crate::linalg::{self, Vector};
use crate::output;
use crate::planner::IncentiveProblem;
use crate::solver::{projected_gradient_image, ResponseResult};

/// `a_k = a0 (k + offset)^{−a_exp}`, `β_k = b0 (k + offset)^{−b_exp}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub a0: f64,
    pub a_exp: f64,
    pub b0: f64,
    pub b_exp: f64,
    pub offset: u64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            a0: 1.0,
            a_exp: 0.6,
            b0: 1.0,
            b_exp: 0.9,
            offset: 1,
        }
    }
}

impl StepSchedule {
    pub fn new(a0: f64, a_exp: f64, b0: f64, b_exp: f64, offset: u64) -> Result<Self> {
        let s = Self::unchecked(a0, a_exp, b0, b_exp, offset);
        s.validate()?;
        Ok(s)
    }

    /// No admissibility check; for experiments that violate the timescale
    /// separation on purpose.
    pub fn unchecked(a0: f64, a_exp: f64, b0: f64, b_exp: f64, offset: u64) -> Self {
        Self {
            a0,
            a_exp,
            b0,
            b_exp,
            offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.offset == 0 {
            return Err(Error::Config("schedule offset must be ≥ 1".into()));
        }
        if !(self.a0 > 0.0 && self.b0 > 0.0) {
            return Err(Error::Config(format!("a0 = {}, b0 = {} must be positive", self.a0, self.b0)));
        }
        for (name, e) in [("a_exp", self.a_exp), ("b_exp", self.b_exp)] {
            if !(e > 0.5 && e <= 1.0) {
                return Err(Error::Config(format!("{name} = {e} must lie in (1/2, 1]")));
            }
        }
        if !(self.b_exp > self.a_exp) {
            return Err(Error::Config(format!(
                "b_exp = {} must exceed a_exp = {} for timescale separation",
                self.b_exp, self.a_exp
            )));
        }
        let cap = (self.offset as f64).powf(self.a_exp);
        if self.a0 > cap {
            return Err(Error::Config(format!(
                "a0 = {} exceeds offset^a_exp = {cap}; a_0 would exceed 1",
                self.a0
            )));
        }
        Ok(())
    }

    /// True when the schedule passes [`validate`](Self::validate).
    pub fn is_admissible(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn a(&self, k: u64) -> f64 {
        self.a0 * ((k + self.offset) as f64).powf(-self.a_exp)
    }

    pub fn beta(&self, k: u64) -> f64 {
        self.b0 * ((k + self.offset) as f64).powf(-self.b_exp)
    }
}

/// The agents' fast map `f(x, p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearningRule {
    /// Agents jump to the equilibrium: `f(x, p) = x*(p)`.
    Ne,
    /// Simultaneous best response.
    Br,
    /// One projected-gradient step `Π(x − η(G0(x) + p))`.
    Pg { eta: f64 },
}

impl LearningRule {
    pub fn name(&self) -> &'static str {
        match self {
            LearningRule::Ne => "ne",
            LearningRule::Br => "br",
            LearningRule::Pg { .. } => "pg",
        }
    }

    /// PG rule at `0.9 · m/L²`.
    pub fn default_pg(game: &GameModel) -> Self {
        LearningRule::Pg {
            eta: 0.9 * game.pg_step_limit(),
        }
    }

    pub fn validate(&self, game: &GameModel) -> Result<()> {
        match self {
            LearningRule::Ne => Ok(()),
            LearningRule::Br => {
                let x = game.space().center();
                game.best_response(&x, &Vector::zeros(game.dim())).map(|_| ())
            }
            LearningRule::Pg { eta } => check_pg_step(game, *eta),
        }
    }

    /// Exponential rate `r` with `‖x(t) − x*(p)‖ ≤ C e^{−rt} ‖x(0) − x*(p)‖`
    /// for the learning flow `ẋ = f(x, p) − x`, uniform in `p`.
    pub fn rate_certificate(&self, game: &GameModel) -> Result<RateCertificate> {
        self.validate(game)?;
        Ok(match self {
            LearningRule::Ne => RateCertificate {
                rate: 1.0,
                constant: 1.0,
            },
            LearningRule::Pg { eta } => RateCertificate {
                rate: 1.0 - game.pg_contraction(*eta),
                constant: 1.0,
            },
            LearningRule::Br => br_certificate(game)?,
        })
    }
}

/// Decay certificate `‖e(t)‖ ≤ constant · e^{−rate·t} ‖e(0)‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub rate: f64,
    pub constant: f64,
}

/// BR error flow `ė = −Q⁻¹M e`. The logarithmic-norm bound gives rate
/// `λ_min(Sym(Q⁻¹M))` when positive; otherwise the `Q`-weighted norm gives
/// `λ_min(Sym(M))/q_max` with constant `(q_max/q_min)^{1/2}`.
fn br_certificate(game: &GameModel) -> Result<RateCertificate> {
    let m = game.linear_matrix().ok_or_else(|| Error::UnsupportedRule {
        rule: "best-response".into(),
        game: game.name().into(),
    })?;
    let q = m.diagonal();
    let qinv_m = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / q[i]);
    let direct = linalg::lambda_min_sym(&qinv_m);
    if direct > 0.0 {
        return Ok(RateCertificate {
            rate: direct,
            constant: 1.0,
        });
    }
    Ok(RateCertificate {
        rate: linalg::lambda_min_sym(m) / q.max(),
        constant: (q.max() / q.min()).sqrt(),
    })
}

fn check_pg_step(game: &GameModel, eta: f64) -> Result<()> {
    let limit = game.pg_step_limit();
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::Config(format!("PG step η = {eta} outside (0, m/L²) = (0, {limit})")));
    }
    Ok(())
}

/// `f^NE(x, p) = x*(p)`.
pub fn learning_rule_ne(problem: &IncentiveProblem, _x: &Vector, p: &Vector) -> Result<Vector> {
    Ok(problem.response(p, None)?.x_star)
}

/// Projected simultaneous best response.
pub fn learning_rule_br(game: &GameModel, x: &Vector, p: &Vector) -> Result<Vector> {
    game.best_response(x, p)
}

/// `f^PG(x, p) = Π(x − η(G0(x) + p))` with `η ∈ (0, m/L²)`.
pub fn learning_rule_pg(game: &GameModel, x: &Vector, p: &Vector, eta: f64) -> Result<Vector> {
    game.space().check_dim(x, "learning_rule_pg x")?;
    game.space().check_dim(p, "learning_rule_pg p")?;
    check_pg_step(game, eta)?;
    Ok(projected_gradient_image(game, x, p, eta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsaConfig {
    pub schedule: StepSchedule,
    pub rule: LearningRule,
    /// Sublevel `c < c*` gating the incentive update.
    pub c: f64,
    pub max_iter: u64,
    pub record_every: u64,
    /// Seed of the run's initial condition, kept for provenance.
    pub seed: u64,
}

impl TtsaConfig {
    pub fn validate(&self, problem: &IncentiveProblem) -> Result<()> {
        self.schedule.validate()?;
        self.validate_unscheduled(problem)
    }

    fn validate_unscheduled(&self, problem: &IncentiveProblem) -> Result<()> {
        self.rule.validate(problem.game())?;
        let c_star = problem.geometry().c_star;
        if !(self.c > 0.0 && self.c < c_star) {
            return Err(Error::Config(format!("c = {} must lie in (0, c* = {c_star})", self.c)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// Iterate `(x_k, p_k)` with the cached response `x*(p_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TtsaState {
    pub k: u64,
    pub x: Vector,
    pub p: Vector,
    pub response: ResponseResult,
}

impl TtsaState {
    pub fn new(problem: &IncentiveProblem, x: Vector, p: Vector) -> Result<Self> {
        let response = problem.response(&p, None)?;
        Ok(Self {
            k: 0,
            x,
            p,
            response,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: TtsaState,
    pub accepted: bool,
    pub beta: f64,
}

/// One step of the iteration from `state`.
pub fn ttsa_step(problem: &IncentiveProblem, cfg: &TtsaConfig, state: &TtsaState) -> Result<StepOutcome> {
    let game = problem.game();
    let space = game.space();
    let k = state.k;
    let a = cfg.schedule.a(k);
    let beta = cfg.schedule.beta(k);

    let f = match &cfg.rule {
        LearningRule::Ne => state.response.x_star.clone(),
        LearningRule::Br => game.best_response(&state.x, &state.p)?,
        LearningRule::Pg { eta } => projected_gradient_image(game, &state.x, &state.p, *eta),
    };
    let x_next = &state.x + (f - &state.x) * a;
    let x_next = if space.contains(&x_next) {
        x_next
    } else {
        let clamped = space.project_unchecked(&x_next);
        if (&clamped - &x_next).amax() > 1e-12 * space.diameter() {
            return Err(Error::Contract(format!(
                "strategy update left the box at k = {k}: {:?}",
                x_next.as_slice()
            )));
        }
        clamped
    };

    let g = problem.objective().grad_phi(&state.x);
    let (accepted, p_next, response) = if g.iter().all(|v| *v == 0.0) {
        (true, state.p.clone(), state.response.clone())
    } else {
        let cand = &state.p + g * beta;
        let (inside, r) = problem.membership(&cand, Some(&state.response.x_star))?;
        if inside {
            (true, cand, r)
        } else {
            (false, state.p.clone(), state.response.clone())
        }
    };
    Ok(StepOutcome {
        state: TtsaState {
            k: k + 1,
            x: x_next,
            p: p_next,
            response,
        },
        accepted,
        beta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsaSample {
    pub k: u64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub tracking_error: f64,
    pub incentive_error: f64,
    #[serde(rename = "V")]
    pub v: f64,
    /// The incentive update leading into this sample was accepted
    /// (always true at `k = 0`).
    pub indicator_accepted: bool,
    pub xi_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: u64,
    pub final_tracking_error: f64,
    pub final_incentive_error: f64,
    /// `Σ_k β_k · 1{accepted}`.
    pub accepted_mass: f64,
    pub rejections: u64,
    pub last_rejection: Option<u64>,
    /// Fraction of accepted incentive updates over the last 10% of steps.
    pub tail_acceptance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsaTrajectory {
    pub config: TtsaConfig,
    pub samples: Vec<TtsaSample>,
    pub summary: RunSummary,
}

impl TtsaTrajectory {
    pub fn last(&self) -> &TtsaSample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.x.len());
        let mut head = vec!["k".to_string()];
        head.extend(output::indexed("x", n));
        head.extend(output::indexed("p", n));
        head.extend(
            ["tracking_error", "incentive_error", "V", "indicator_accepted", "xi_norm"].map(String::from),
        );
        writeln!(w, "{}", head.join(","))?;
        for s in &self.samples {
            let mut line = s.k.to_string();
            output::push_floats(&mut line, &s.x);
            output::push_floats(&mut line, &s.p);
            output::push_floats(&mut line, &[s.tracking_error, s.incentive_error, s.v]);
            output::push_raw(&mut line, if s.indicator_accepted { "1" } else { "0" });
            output::push_float(&mut line, s.xi_norm);
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

    /// JSON with the full configuration as a header block.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        output::write_json(path, self)
    }
}

fn sample(problem: &IncentiveProblem, s: &TtsaState, accepted: bool) -> TtsaSample {
    let obj = problem.objective();
    TtsaSample {
        k: s.k,
        x: s.x.iter().copied().collect(),
        p: s.p.iter().copied().collect(),
        tracking_error: (&s.x - &s.response.x_star).norm(),
        incentive_error: (&s.p - problem.p_dagger()).norm(),
        v: obj.gap(&s.response.x_star),
        indicator_accepted: accepted,
        xi_norm: (obj.grad_phi(&s.x) - obj.grad_phi(&s.response.x_star)).norm(),
    }
}

/// Runs `cfg.max_iter` steps from `(x0, p0) ∈ X × P_c`.
pub fn run_ttsa(problem: &IncentiveProblem, x0: &Vector, p0: &Vector, cfg: &TtsaConfig) -> Result<TtsaTrajectory> {
    cfg.validate(problem)?;
    run_ttsa_inner(problem, x0, p0, cfg)
}

/// As [`run_ttsa`] but accepts schedules that break the timescale
/// separation (used to demonstrate the resulting degradation).
pub fn run_ttsa_unscheduled(
    problem: &IncentiveProblem,
    x0: &Vector,
    p0: &Vector,
    cfg: &TtsaConfig,
) -> Result<TtsaTrajectory> {
    cfg.validate_unscheduled(problem)?;
    let s = &cfg.schedule;
    if !(s.a0 > 0.0 && s.b0 > 0.0 && s.offset > 0 && s.a(0) <= 1.0) {
        return Err(Error::Config("schedule needs positive a0, b0, offset and a_0 ≤ 1".into()));
    }
    run_ttsa_inner(problem, x0, p0, cfg)
}

fn run_ttsa_inner(problem: &IncentiveProblem, x0: &Vector, p0: &Vector, cfg: &TtsaConfig) -> Result<TtsaTrajectory> {
    let problem = problem.with_c(cfg.c)?;
    let space = problem.game().space();
    space.check_dim(x0, "run_ttsa x0")?;
    space.check_dim(p0, "run_ttsa p0")?;
    if !space.contains(x0) {
        return Err(Error::Precondition(format!("x0 = {:?} is outside the box", x0.as_slice())));
    }
    let (inside, response) = problem.membership(p0, None)?;
    if !inside {
        return Err(Error::Precondition(format!(
            "p0 = {:?} is not in P_c (c = {})",
            p0.as_slice(),
            cfg.c
        )));
    }
    let mut state = TtsaState {
        k: 0,
        x: x0.clone(),
        p: p0.clone(),
        response,
    };
    let mut samples = vec![sample(&problem, &state, true)];
    let tail_start = cfg.max_iter - cfg.max_iter / 10;
    let (mut mass, mut rejections, mut last_rejection) = (0.0, 0u64, None);
    let (mut tail_steps, mut tail_accepted) = (0u64, 0u64);

    for _ in 0..cfg.max_iter {
        let k = state.k;
        let out = ttsa_step(&problem, cfg, &state)?;
        if out.accepted {
            mass += out.beta;
        } else {
            rejections += 1;
            last_rejection = Some(k);
        }
        if k >= tail_start {
            tail_steps += 1;
            tail_accepted += out.accepted as u64;
        }
        state = out.state;
        if state.k % cfg.record_every == 0 || state.k == cfg.max_iter {
            samples.push(sample(&problem, &state, out.accepted));
        }
    }
    let last = samples.last().expect("initial sample");
    let summary = RunSummary {
        iterations: cfg.max_iter,
        final_tracking_error: last.tracking_error,
        final_incentive_error: last.incentive_error,
        accepted_mass: mass,
        rejections,
        last_rejection,
        tail_acceptance: if tail_steps == 0 {
            1.0
        } else {
            tail_accepted as f64 / tail_steps as f64
        },
    };
    Ok(TtsaTrajectory {
        config: cfg.clone(),
        samples,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    /// Means over the last half of the recorded samples.
    pub tail_mean_tracking: f64,
    pub tail_mean_incentive: f64,
    pub accepted_mass: f64,
    pub tail_acceptance: f64,
    /// Block maxima of both errors are nonincreasing over the last half.
    pub monotone_tail: bool,
}

/// Tail statistics of a recorded run.
pub fn tracking_diagnostics(rec: &TtsaTrajectory) -> DiagnosticsSummary {
    let tail = &rec.samples[rec.samples.len() / 2..];
    let mean = |f: fn(&TtsaSample) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    let blocks = 4.min(tail.len());
    let block_max = |f: fn(&TtsaSample) -> f64| -> Vec<f64> {
        (0..blocks)
            .map(|b| {
                let lo = b * tail.len() / blocks;
                let hi = (b + 1) * tail.len() / blocks;
                tail[lo..hi].iter().map(f).fold(0.0, f64::max)
            })
            .collect()
    };
    let nonincreasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] <= w[0]);
    DiagnosticsSummary {
        tail_mean_tracking: mean(|s| s.tracking_error),
        tail_mean_incentive: mean(|s| s.incentive_error),
        accepted_mass: rec.summary.accepted_mass,
        tail_acceptance: rec.summary.tail_acceptance,
        monotone_tail: nonincreasing(block_max(|s| s.tracking_error))
            && nonincreasing(block_max(|s| s.incentive_error)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games;
    use crate::planner::SocialObjective;

    fn problem(name: &str) -> IncentiveProblem {
        let pre = games::preset(name).unwrap();
        IncentiveProblem::new(pre.game, SocialObjective::centered_quadratic(pre.x_dagger), 0.8).unwrap()
    }

    #[test]
    fn default_schedule_values() {
        let s = StepSchedule::default();
        s.validate().unwrap();
        assert_eq!(s.a(0), 1.0);
        assert_eq!(s.beta(0), 1.0);
        assert!((s.a(1) - 2f64.powf(-0.6)).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejections() {
        assert!(StepSchedule::new(1.0, 0.6, 1.0, 0.6, 1).is_err());
        assert!(StepSchedule::new(1.0, 0.5, 1.0, 0.9, 1).is_err());
        assert!(StepSchedule::new(1.0, 0.6, 1.0, 1.1, 1).is_err());
        assert!(StepSchedule::new(2.0, 0.6, 1.0, 0.9, 1).is_err());
        assert!(StepSchedule::new(2.0, 0.6, 1.0, 0.9, 4).is_ok());
        assert!(StepSchedule::new(1.0, 0.6, 1.0, 0.9, 0).is_err());
    }

    #[test]
    fn pg_example_step() {
        let pre = games::preset(games::PRESET_OSCILLATOR).unwrap();
        let x = Vector::zeros(2);
        let p = Vector::from_column_slice(&[0.1, -0.1]);
        let y = learning_rule_pg(&pre.game, &x, &p, 0.01).unwrap();
        assert!((y[0] + 0.001).abs() < 1e-15 && (y[1] - 0.001).abs() < 1e-15);
        assert!(matches!(
            learning_rule_pg(&pre.game, &x, &p, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn br_unsupported_on_oscillator() {
        let pre = games::preset(games::PRESET_OSCILLATOR).unwrap();
        assert!(matches!(
            learning_rule_br(&pre.game, &Vector::zeros(2), &Vector::zeros(2)),
            Err(Error::UnsupportedRule { .. })
        ));
        assert!(LearningRule::Br.validate(&pre.game).is_err());
    }

    #[test]
    fn null_step_at_optimum() {
        for name in games::PRESETS {
            let prob = problem(name);
            let rule = if name == games::PRESET_OSCILLATOR {
                LearningRule::default_pg(prob.game())
            } else {
                LearningRule::Br
            };
            let cfg = TtsaConfig {
                schedule: StepSchedule::default(),
                rule,
                c: prob.geometry().c,
                max_iter: 1,
                record_every: 1,
                seed: 0,
            };
            let st = TtsaState::new(&prob, prob.objective().x_dagger().clone(), prob.p_dagger()).unwrap();
            let out = ttsa_step(&prob, &cfg, &st).unwrap();
            assert!(out.accepted);
            assert!((&out.state.x - &st.x).amax() < 1e-12, "{name}");
            assert_eq!(out.state.p, st.p);
        }
    }

    #[test]
    fn constant_run_at_optimum() {
        let prob = problem(games::PRESET_AGGREGATIVE);
        let cfg = TtsaConfig {
            schedule: StepSchedule::default(),
            rule: LearningRule::Ne,
            c: prob.geometry().c,
            max_iter: 50,
            record_every: 10,
            seed: 0,
        };
        let tr = run_ttsa(&prob, prob.objective().x_dagger(), &prob.p_dagger(), &cfg).unwrap();
        assert_eq!(tr.samples.len(), 6);
        for s in &tr.samples {
            assert!(s.tracking_error < 1e-12 && s.incentive_error < 1e-12);
        }
        let d = tracking_diagnostics(&tr);
        assert_eq!(d.tail_acceptance, 1.0);
        assert!(d.tail_mean_tracking < 1e-12);
    }
}
