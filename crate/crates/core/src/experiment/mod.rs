//! Configuration-driven experiment harness behind the `socialgrad` binary.

mod batch;
mod config;
mod sampling;
mod verify;

pub use batch::{
    decade_bins, envelope, initial_conditions, median, run_flow_batch, run_timescale_sweep, run_ttsa_batch,
    DecadeBin, EnvelopeRow, FlowBatchSummary, FlowRunEntry, RuleBatch, SweepRow, SweepTable, TtsaBatchSummary,
    TtsaRunEntry,
};
pub use config::{
    ExperimentConfig, ExperimentKind, FlowSection, ObjectiveSpec, RuleSpec, SolverSection, SweepSection,
    TtsaSection, VerifySection,
};
pub use sampling::{pilot_acceptance_rate, run_rng, sample_initial_conditions, InitialCondition};
pub use verify::{run_verify, Status, VerifyEntry, VerifyReport};

use crate::error::Result;
use crate::output;

#[derive(Clone, Debug)]
pub enum Outcome {
    Flow(FlowBatchSummary),
    Ttsa(TtsaBatchSummary),
    Sweep(SweepTable),
    Verify(VerifyReport),
}

impl Outcome {
    /// Failed runs or checks recorded by the experiment.
    pub fn failures(&self) -> usize {
        match self {
            Outcome::Flow(s) => s.failures,
            Outcome::Ttsa(s) => s.failures(),
            Outcome::Sweep(s) => s.failures(),
            Outcome::Verify(r) => r.failures(),
        }
    }
}

/// Runs the experiment named in `cfg` on `jobs` workers, after writing the
/// resolved configuration to `output_dir/config.resolved.toml`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome> {
    cfg.validate()?;
    let mut w = output::create(&cfg.output_dir.join("config.resolved.toml"))?;
    std::io::Write::write_all(&mut w, cfg.to_toml()?.as_bytes())?;
    std::io::Write::flush(&mut w)?;
    match cfg.experiment {
        ExperimentKind::Verify => run_verify(cfg).map(Outcome::Verify),
        kind => {
            let problem = cfg.build_problem()?;
            let jobs = jobs.max(1);
            match kind {
                ExperimentKind::Flow => run_flow_batch(cfg, &problem, jobs).map(Outcome::Flow),
                ExperimentKind::Ttsa => run_ttsa_batch(cfg, &problem, jobs).map(Outcome::Ttsa),
                _ => run_timescale_sweep(cfg, &problem, jobs).map(Outcome::Sweep),
            }
        }
    }
}
