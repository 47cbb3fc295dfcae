//! Batch runners for the flow, TTSA and timescale-sweep experiments.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::output;
use crate::planner::{integrate_social_gradient_flow, IncentiveProblem};
use crate::ttsa::{run_ttsa, LearningRule, StepSchedule, TtsaConfig, TtsaTrajectory};

use super::config::ExperimentConfig;
use super::sampling::{sample_initial_conditions, InitialCondition};

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))
}

/// Initial conditions from the config: the fixed `ttsa.x0`/`ttsa.p0` pair
/// when given, otherwise seeded samples.
pub fn initial_conditions(cfg: &ExperimentConfig, problem: &IncentiveProblem) -> Result<Vec<InitialCondition>> {
    match (&cfg.ttsa.x0, &cfg.ttsa.p0) {
        (Some(x0), Some(p0)) => {
            let r = problem.response(&Vector::from_column_slice(p0), None)?;
            Ok(vec![InitialCondition {
                index: 0,
                x0: x0.clone(),
                p0: p0.clone(),
                x_bar: r.x_star.iter().copied().collect(),
            }])
        }
        _ => sample_initial_conditions(problem, cfg.seed, cfg.num_initial_conditions),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRunEntry {
    pub index: usize,
    pub initial_v: f64,
    pub final_t: f64,
    pub final_v: f64,
    pub final_dist: f64,
    pub steps: usize,
    pub stopped_early: bool,
    /// Largest increase of `V` between consecutive samples.
    pub max_v_increase: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowBatchSummary {
    pub game: String,
    pub c_star: f64,
    pub c: f64,
    pub horizon: f64,
    pub dt: f64,
    pub runs: Vec<FlowRunEntry>,
    /// Runs with the largest and smallest initial `V`.
    pub max_initial_v_run: Option<usize>,
    pub min_initial_v_run: Option<usize>,
    pub final_dist_min: f64,
    pub final_dist_median: f64,
    pub final_dist_max: f64,
    pub failures: usize,
}

fn extreme_run(runs: &[FlowRunEntry], pick_max: bool) -> Option<usize> {
    runs.iter()
        .filter(|r| r.error.is_none())
        .reduce(|a, b| {
            let better = if pick_max { b.initial_v > a.initial_v } else { b.initial_v < a.initial_v };
            if better {
                b
            } else {
                a
            }
        })
        .map(|r| r.index)
}

/// Integrates the flow from every sampled `p0` and writes `flow/run_NNNN.csv`
/// plus `flow_summary.json`.
pub fn run_flow_batch(cfg: &ExperimentConfig, problem: &IncentiveProblem, jobs: usize) -> Result<FlowBatchSummary> {
    let fcfg = cfg.flow_config(problem);
    fcfg.validate()?;
    let ics = match &cfg.flow.p0 {
        Some(p0) => {
            let x_bar: Vec<f64> = problem.response(&Vector::from_column_slice(p0), None)?.x_star.iter().copied().collect();
            vec![InitialCondition {
                index: 0,
                x0: x_bar.clone(),
                p0: p0.clone(),
                x_bar,
            }]
        }
        None => sample_initial_conditions(problem, cfg.seed, cfg.num_initial_conditions)?,
    };
    let dir = cfg.output_dir.join("flow");
    let runs: Vec<FlowRunEntry> = pool(jobs)?.install(|| {
        ics.par_iter()
            .map(|ic| {
                let res = integrate_social_gradient_flow(problem, &ic.p0(), &fcfg).and_then(|tr| {
                    tr.save_csv(&dir.join(format!("run_{:04}.csv", ic.index)))?;
                    Ok(tr)
                });
                match res {
                    Ok(tr) => {
                        let last = tr.last();
                        FlowRunEntry {
                            index: ic.index,
                            initial_v: tr.samples[0].v,
                            final_t: last.t,
                            final_v: last.v,
                            final_dist: last.dist_to_pdagger,
                            steps: tr.steps,
                            stopped_early: tr.stopped_early,
                            max_v_increase: tr
                                .samples
                                .windows(2)
                                .map(|w| w[1].v - w[0].v)
                                .fold(f64::NEG_INFINITY, f64::max),
                            error: None,
                        }
                    }
                    Err(e) => FlowRunEntry {
                        index: ic.index,
                        initial_v: f64::NAN,
                        final_t: f64::NAN,
                        final_v: f64::NAN,
                        final_dist: f64::NAN,
                        steps: 0,
                        stopped_early: false,
                        max_v_increase: f64::NAN,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let dists: Vec<f64> = runs.iter().filter(|r| r.error.is_none()).map(|r| r.final_dist).collect();
    let failures = runs.iter().filter(|r| r.error.is_some()).count();
    for r in runs.iter().filter(|r| r.error.is_some()) {
        warn!("flow run {} failed: {}", r.index, r.error.as_deref().unwrap_or_default());
    }
    let summary = FlowBatchSummary {
        game: problem.game().name().into(),
        c_star: problem.geometry().c_star,
        c: problem.geometry().c,
        horizon: fcfg.horizon,
        dt: fcfg.dt,
        max_initial_v_run: extreme_run(&runs, true),
        min_initial_v_run: extreme_run(&runs, false),
        final_dist_min: dists.iter().copied().fold(f64::INFINITY, f64::min),
        final_dist_median: if dists.is_empty() { f64::NAN } else { median(&dists) },
        final_dist_max: dists.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        failures,
        runs,
    };
    output::write_json(&cfg.output_dir.join("flow_summary.json"), &summary)?;
    info!(
        "flow batch: {} runs, {} failures, final ‖p − p†‖ ≤ {:.3e}",
        summary.runs.len(),
        failures,
        summary.final_dist_max
    );
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsaRunEntry {
    pub index: usize,
    pub final_tracking_error: f64,
    pub final_incentive_error: f64,
    pub accepted_mass: f64,
    pub rejections: u64,
    pub last_rejection: Option<u64>,
    pub tail_acceptance: f64,
    pub error: Option<String>,
}

/// Per-`k` statistics across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub k: u64,
    pub tracking_median: f64,
    pub tracking_min: f64,
    pub tracking_max: f64,
    pub incentive_median: f64,
    pub incentive_min: f64,
    pub incentive_max: f64,
}

/// Maximum of the max-envelope over `[lo, hi)` (the last bin is closed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecadeBin {
    pub lo: u64,
    pub hi: u64,
    pub tracking_max: f64,
    pub incentive_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleBatch {
    pub rule: LearningRule,
    pub runs: Vec<TtsaRunEntry>,
    pub envelope: Vec<EnvelopeRow>,
    pub decades: Vec<DecadeBin>,
    pub failures: usize,
}

impl RuleBatch {
    pub fn at(&self, k: u64) -> Option<&EnvelopeRow> {
        self.envelope.iter().find(|r| r.k == k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsaBatchSummary {
    pub game: String,
    pub c_star: f64,
    pub c: f64,
    pub schedule: StepSchedule,
    pub max_iter: u64,
    pub rules: Vec<RuleBatch>,
}

impl TtsaBatchSummary {
    pub fn failures(&self) -> usize {
        self.rules.iter().map(|r| r.failures).sum()
    }
}

/// Envelope over runs sharing the same recorded `k` grid.
pub fn envelope(runs: &[&TtsaTrajectory]) -> Vec<EnvelopeRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    (0..first.samples.len())
        .map(|i| {
            let tr: Vec<f64> = runs.iter().map(|r| r.samples[i].tracking_error).collect();
            let inc: Vec<f64> = runs.iter().map(|r| r.samples[i].incentive_error).collect();
            EnvelopeRow {
                k: first.samples[i].k,
                tracking_median: median(&tr),
                tracking_min: tr.iter().copied().fold(f64::INFINITY, f64::min),
                tracking_max: tr.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                incentive_median: median(&inc),
                incentive_min: inc.iter().copied().fold(f64::INFINITY, f64::min),
                incentive_max: inc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Max-envelope maxima over `[10^d, 10^{d+1})`, the last bin closed at `max_iter`.
pub fn decade_bins(env: &[EnvelopeRow], max_iter: u64) -> Vec<DecadeBin> {
    let mut bins = Vec::new();
    let mut lo = 1u64;
    while lo <= max_iter {
        let hi = lo.saturating_mul(10);
        let last = hi > max_iter;
        let rows: Vec<&EnvelopeRow> = env
            .iter()
            .filter(|r| r.k >= lo && (r.k < hi || (last && r.k <= max_iter)))
            .collect();
        if !rows.is_empty() {
            bins.push(DecadeBin {
                lo,
                hi: hi.min(max_iter),
                tracking_max: rows.iter().map(|r| r.tracking_max).fold(f64::NEG_INFINITY, f64::max),
                incentive_max: rows.iter().map(|r| r.incentive_max).fold(f64::NEG_INFINITY, f64::max),
            });
        }
        if last {
            break;
        }
        lo = hi;
    }
    // fold a lone closing sample at max_iter = 10^d into the previous decade
    if bins.len() >= 2 && bins.last().map(|b| b.lo) == Some(max_iter) {
        let tail = bins.pop().expect("checked");
        let prev = bins.last_mut().expect("checked");
        prev.hi = max_iter;
        prev.tracking_max = prev.tracking_max.max(tail.tracking_max);
        prev.incentive_max = prev.incentive_max.max(tail.incentive_max);
    }
    bins
}

fn write_envelope(path: &Path, env: &[EnvelopeRow]) -> Result<()> {
    let mut w = output::create(path)?;
    writeln!(
        w,
        "k,tracking_median,tracking_min,tracking_max,incentive_median,incentive_min,incentive_max"
    )?;
    for r in env {
        let mut line = r.k.to_string();
        output::push_floats(
            &mut line,
            &[
                r.tracking_median,
                r.tracking_min,
                r.tracking_max,
                r.incentive_median,
                r.incentive_min,
                r.incentive_max,
            ],
        );
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_entry(index: usize, res: &Result<TtsaTrajectory>) -> TtsaRunEntry {
    match res {
        Ok(tr) => TtsaRunEntry {
            index,
            final_tracking_error: tr.summary.final_tracking_error,
            final_incentive_error: tr.summary.final_incentive_error,
            accepted_mass: tr.summary.accepted_mass,
            rejections: tr.summary.rejections,
            last_rejection: tr.summary.last_rejection,
            tail_acceptance: tr.summary.tail_acceptance,
            error: None,
        },
        Err(e) => TtsaRunEntry {
            index,
            final_tracking_error: f64::NAN,
            final_incentive_error: f64::NAN,
            accepted_mass: f64::NAN,
            rejections: 0,
            last_rejection: None,
            tail_acceptance: f64::NAN,
            error: Some(e.to_string()),
        },
    }
}

fn ttsa_runs(
    problem: &IncentiveProblem,
    ics: &[InitialCondition],
    base: &TtsaConfig,
    seed: u64,
    dir: Option<&PathBuf>,
    jobs: usize,
) -> Result<Vec<Result<TtsaTrajectory>>> {
    Ok(pool(jobs)?.install(|| {
        ics.par_iter()
            .map(|ic| {
                let cfg = TtsaConfig {
                    seed,
                    ..base.clone()
                };
                let tr = run_ttsa(problem, &ic.x0(), &ic.p0(), &cfg)?;
                if let Some(dir) = dir {
                    tr.save_csv(&dir.join(format!("run_{:04}.csv", ic.index)))?;
                }
                Ok(tr)
            })
            .collect()
    }))
}

/// Runs TTSA per configured rule and initial condition; writes
/// `ttsa/<rule>/envelope.csv`, optional per-run CSVs and `ttsa_summary.json`.
pub fn run_ttsa_batch(cfg: &ExperimentConfig, problem: &IncentiveProblem, jobs: usize) -> Result<TtsaBatchSummary> {
    cfg.schedule.validate()?;
    let ics = initial_conditions(cfg, problem)?;
    let mut rules = Vec::new();
    for spec in &cfg.ttsa.rules {
        let rule = spec.resolve(problem);
        let base = TtsaConfig {
            schedule: cfg.schedule.clone(),
            rule: rule.clone(),
            c: problem.geometry().c,
            max_iter: cfg.ttsa.max_iter,
            record_every: cfg.ttsa.record_every,
            seed: cfg.seed,
        };
        base.validate(problem)?;
        let dir = cfg.output_dir.join("ttsa").join(rule.name());
        let results = ttsa_runs(problem, &ics, &base, cfg.seed, cfg.ttsa.write_runs.then_some(&dir), jobs)?;
        let runs: Vec<TtsaRunEntry> = ics.iter().zip(&results).map(|(ic, r)| run_entry(ic.index, r)).collect();
        let ok: Vec<&TtsaTrajectory> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let env = envelope(&ok);
        write_envelope(&dir.join("envelope.csv"), &env)?;
        let failures = runs.iter().filter(|r| r.error.is_some()).count();
        for r in runs.iter().filter(|r| r.error.is_some()) {
            warn!("ttsa {} run {} failed: {}", rule.name(), r.index, r.error.as_deref().unwrap_or_default());
        }
        info!("ttsa {}: {} runs, {} failures", rule.name(), runs.len(), failures);
        rules.push(RuleBatch {
            decades: decade_bins(&env, cfg.ttsa.max_iter),
            rule,
            runs,
            envelope: env,
            failures,
        });
    }
    let summary = TtsaBatchSummary {
        game: problem.game().name().into(),
        c_star: problem.geometry().c_star,
        c: problem.geometry().c,
        schedule: cfg.schedule.clone(),
        max_iter: cfg.ttsa.max_iter,
        rules,
    };
    output::write_json(&cfg.output_dir.join("ttsa_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub a_exp: f64,
    pub b_exp: f64,
    /// `None` when the point ran; otherwise the reason it was skipped.
    pub skipped: Option<String>,
    pub final_tracking_error: f64,
    pub final_incentive_error: f64,
    pub tail_acceptance: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rule: LearningRule,
    pub max_iter: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }
}

/// Holds `a_exp` fixed and sets `b_exp = a_exp + γ`; reports median final
/// errors across initial conditions per `γ`.
pub fn run_timescale_sweep(cfg: &ExperimentConfig, problem: &IncentiveProblem, jobs: usize) -> Result<SweepTable> {
    let ics = initial_conditions(cfg, problem)?;
    let rule = cfg.ttsa.rules[0].resolve(problem);
    let a_exp = cfg.sweep.a_exp.unwrap_or(cfg.schedule.a_exp);
    let mut rows = Vec::new();
    for &gamma in &cfg.sweep.gammas {
        let b_exp = a_exp + gamma;
        let schedule = StepSchedule {
            a_exp,
            b_exp,
            ..cfg.schedule.clone()
        };
        let skipped = |reason: String| SweepRow {
            gamma,
            a_exp,
            b_exp,
            skipped: Some(reason),
            final_tracking_error: f64::NAN,
            final_incentive_error: f64::NAN,
            tail_acceptance: f64::NAN,
            failures: 0,
        };
        if let Err(e) = schedule.validate() {
            warn!("sweep point γ = {gamma} skipped: {e}");
            rows.push(skipped(e.to_string()));
            continue;
        }
        let base = TtsaConfig {
            schedule,
            rule: rule.clone(),
            c: problem.geometry().c,
            max_iter: cfg.ttsa.max_iter,
            record_every: cfg.ttsa.record_every,
            seed: cfg.seed,
        };
        base.validate(problem)?;
        let dir = cfg.output_dir.join("sweep").join(format!("gamma_{gamma:.3}"));
        let results = ttsa_runs(problem, &ics, &base, cfg.seed, cfg.ttsa.write_runs.then_some(&dir), jobs)?;
        let ok: Vec<&TtsaTrajectory> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failures = results.len() - ok.len();
        let med = |f: fn(&TtsaTrajectory) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                median(&ok.iter().map(|t| f(t)).collect::<Vec<_>>())
            }
        };
        rows.push(SweepRow {
            gamma,
            a_exp,
            b_exp,
            skipped: None,
            final_tracking_error: med(|t| t.summary.final_tracking_error),
            final_incentive_error: med(|t| t.summary.final_incentive_error),
            tail_acceptance: med(|t| t.summary.tail_acceptance),
            failures,
        });
    }
    let table = SweepTable {
        rule,
        max_iter: cfg.ttsa.max_iter,
        rows,
    };
    let mut w = output::create(&cfg.output_dir.join("sweep.csv"))?;
    writeln!(
        w,
        "gamma,a_exp,b_exp,final_tracking_error,final_incentive_error,tail_acceptance,failures,status"
    )?;
    for r in &table.rows {
        let mut line = String::new();
        output::push_floats(
            &mut line,
            &[
                r.gamma,
                r.a_exp,
                r.b_exp,
                r.final_tracking_error,
                r.final_incentive_error,
                r.tail_acceptance,
            ],
        );
        output::push_raw(&mut line, &r.failures.to_string());
        let status = r.skipped.as_deref().map_or("ok".to_string(), |s| format!("\"skipped: {}\"", s.replace('"', "'")));
        output::push_raw(&mut line, &status);
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    output::write_json(&cfg.output_dir.join("sweep_summary.json"), &table)?;
    Ok(table)
}
