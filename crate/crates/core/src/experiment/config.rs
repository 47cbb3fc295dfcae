//! Experiment configuration file schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::games::PRESET_AGGREGATIVE;
use crate::linalg::Vector;
use crate::planner::{FlowConfig, IncentiveProblem, Integrator, SocialObjective};
use crate::solver::SolverMethod;
use crate::ttsa::{LearningRule, StepSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Flow,
    Ttsa,
    Sweep,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `½‖x − x†‖²`.
    CenteredQuadratic { x_dagger: Option<Vec<f64>> },
    /// `½ Σ w_i (x_i − x†_i)²`.
    WeightedQuadratic {
        x_dagger: Option<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::CenteredQuadratic { x_dagger: None }
    }
}

/// Learning rule as written in a config file; a missing PG step defaults to
/// `0.9 · m/L²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RuleSpec {
    Ne,
    Br,
    Pg { eta: Option<f64> },
}

impl RuleSpec {
    pub fn resolve(&self, problem: &IncentiveProblem) -> LearningRule {
        match self {
            RuleSpec::Ne => LearningRule::Ne,
            RuleSpec::Br => LearningRule::Br,
            RuleSpec::Pg { eta: Some(eta) } => LearningRule::Pg { eta: *eta },
            RuleSpec::Pg { eta: None } => LearningRule::default_pg(problem.game()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Option<SolverMethod>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub step_eta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub integrator: Integrator,
    /// Defaults to `10⁻²·m/2`.
    pub dt: Option<f64>,
    pub horizon: f64,
    pub record_every: usize,
    pub stop_tol: f64,
    /// Fixed starting incentive; overrides sampling.
    pub p0: Option<Vec<f64>>,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk4,
            dt: None,
            horizon: 40.0,
            record_every: 10,
            stop_tol: 1e-8,
            p0: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsaSection {
    pub rules: Vec<RuleSpec>,
    pub max_iter: u64,
    pub record_every: u64,
    /// Fixed initial condition; overrides sampling when both are given.
    pub x0: Option<Vec<f64>>,
    pub p0: Option<Vec<f64>>,
    /// Write one CSV per run besides the envelopes.
    pub write_runs: bool,
}

impl Default for TtsaSection {
    fn default() -> Self {
        Self {
            rules: vec![RuleSpec::Ne, RuleSpec::Br],
            max_iter: 100_000,
            record_every: 100,
            x0: None,
            p0: None,
            write_runs: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    /// Fast exponent held fixed; defaults to the schedule's `a_exp`.
    pub a_exp: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gammas: vec![0.1, 0.2, 0.3, 0.4],
            a_exp: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub samples: usize,
    pub fd_step: f64,
    pub grid_density: Option<usize>,
    pub schedule_terms: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            samples: 100,
            fd_step: 1e-5,
            grid_density: None,
            schedule_terms: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub game: GameSpec,
    pub objective: ObjectiveSpec,
    pub num_initial_conditions: usize,
    /// `c = c_fraction · c*`.
    pub c_fraction: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub schedule: StepSchedule,
    pub solver: SolverSection,
    pub flow: FlowSection,
    pub ttsa: TtsaSection,
    pub sweep: SweepSection,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Verify,
            game: GameSpec::Preset {
                name: PRESET_AGGREGATIVE.into(),
            },
            objective: ObjectiveSpec::default(),
            num_initial_conditions: 100,
            c_fraction: 0.8,
            seed: 0,
            output_dir: PathBuf::from("out"),
            schedule: StepSchedule::default(),
            solver: SolverSection::default(),
            flow: FlowSection::default(),
            ttsa: TtsaSection::default(),
            sweep: SweepSection::default(),
            verify: VerifySection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_fraction > 0.0 && self.c_fraction < 1.0) {
            return Err(Error::Config(format!("c_fraction must lie in (0, 1), got {}", self.c_fraction)));
        }
        if self.num_initial_conditions == 0 {
            return Err(Error::Config("num_initial_conditions must be ≥ 1".into()));
        }
        if self.ttsa.rules.is_empty() {
            return Err(Error::Config("ttsa.rules must list at least one rule".into()));
        }
        if self.ttsa.x0.is_some() != self.ttsa.p0.is_some() {
            return Err(Error::Config("ttsa.x0 and ttsa.p0 must be given together".into()));
        }
        if self.ttsa.max_iter == 0 || self.ttsa.record_every == 0 {
            return Err(Error::Config("ttsa.max_iter and ttsa.record_every must be positive".into()));
        }
        Ok(())
    }

    /// Social optimum from the objective section, or the game's default.
    pub fn x_dagger(&self) -> Result<Vector> {
        let explicit = match &self.objective {
            ObjectiveSpec::CenteredQuadratic { x_dagger } | ObjectiveSpec::WeightedQuadratic { x_dagger, .. } => {
                x_dagger.clone()
            }
        };
        match explicit {
            Some(v) => Ok(Vector::from_vec(v)),
            None => self.game.default_x_dagger(),
        }
    }

    pub fn objective(&self) -> Result<SocialObjective> {
        let xd = self.x_dagger()?;
        match &self.objective {
            ObjectiveSpec::CenteredQuadratic { .. } => Ok(SocialObjective::centered_quadratic(xd)),
            ObjectiveSpec::WeightedQuadratic { weights, .. } => {
                SocialObjective::weighted_quadratic(xd, Vector::from_column_slice(weights))
            }
        }
    }

    /// Game, objective and sublevel geometry with solver overrides applied.
    pub fn build_problem(&self) -> Result<IncentiveProblem> {
        self.validate()?;
        let game = self.game.build()?;
        let problem = IncentiveProblem::new(game, self.objective()?, self.c_fraction)?;
        let mut solver = problem.solver().clone();
        let s = &self.solver;
        if let Some(m) = s.method {
            solver.method = m;
        }
        if let Some(t) = s.tol {
            solver.tol = t;
        }
        if let Some(n) = s.max_iter {
            solver.max_iter = n;
        }
        if let Some(e) = s.step_eta {
            solver.step_eta = e;
        }
        problem.with_solver(solver)
    }

    pub fn flow_config(&self, problem: &IncentiveProblem) -> FlowConfig {
        let base = FlowConfig::for_game(problem.game(), self.flow.horizon);
        FlowConfig {
            integrator: self.flow.integrator,
            dt: self.flow.dt.unwrap_or(base.dt),
            horizon: self.flow.horizon,
            record_every: self.flow.record_every,
            stop_tol: self.flow.stop_tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.ttsa.rules = vec![RuleSpec::Pg { eta: Some(0.01) }];
        cfg.ttsa.x0 = Some(vec![0.0, -0.5]);
        cfg.ttsa.p0 = Some(vec![-3.0, -3.0]);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("c_fractoin = 0.5"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"
            experiment = "ttsa"
            c_fraction = 0.95
            num_initial_conditions = 1

            [game]
            kind = "oscillator"
            theta = [4.2, 5.0]
            lower = [-1.0471975511965976, -1.0471975511965976]
            upper = [1.0471975511965976, 1.0471975511965976]

            [objective]
            form = "centered-quadratic"
            x_dagger = [0.8, 0.7]

            [ttsa]
            rules = [{ kind = "pg" }]
            x0 = [0.0, -0.5]
            p0 = [-3.0, -3.0]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Ttsa);
        assert_eq!(cfg.ttsa.rules, vec![RuleSpec::Pg { eta: None }]);
        let problem = cfg.build_problem().unwrap();
        assert!((problem.geometry().c - 0.95 * problem.geometry().c_star).abs() < 1e-15);
    }

    #[test]
    fn invalid_fraction() {
        let cfg = ExperimentConfig {
            c_fraction: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
