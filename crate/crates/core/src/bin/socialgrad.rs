//! `socialgrad` command-line harness.
//!
//! Exit status: 0 when every run and check passed, 1 when the experiment
//! finished with failures recorded, 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use socialgrad::error::Error;
use socialgrad::experiment::{run_experiment, ExperimentConfig, ExperimentKind, Outcome, Status};
use socialgrad::games::GameSpec;

#[derive(Parser, Debug)]
#[command(name = "socialgrad", version, about = "Incentive design experiments without hypergradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the social-gradient flow from sampled incentives.
    Flow(Common),
    /// Run two-timescale batches per learning rule.
    Ttsa(Common),
    /// Sweep the timescale separation exponent.
    Sweep(Common),
    /// Run the property suite and print a pass/fail table.
    Verify(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Named game preset (aggregative-5, oscillator-2).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Worker threads for batch runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long)]
    quiet: bool,
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::Construction(_)
            | Error::DimensionMismatch { .. }
            | Error::SamplingRate { .. }
            | Error::Serialization(_)
    )
}

fn resolve(kind: ExperimentKind, c: &Common) -> socialgrad::error::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = kind;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(name) = &c.preset {
        socialgrad::games::preset(name)?;
        cfg.game = GameSpec::Preset { name: name.clone() };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_outcome(outcome: &Outcome) {
    match outcome {
        Outcome::Flow(s) => {
            println!(
                "flow: {} runs, {} failed, final |p - p†| min {:.3e} median {:.3e} max {:.3e}",
                s.runs.len(),
                s.failures,
                s.final_dist_min,
                s.final_dist_median,
                s.final_dist_max
            );
        }
        Outcome::Ttsa(s) => {
            for r in &s.rules {
                let last = r.envelope.last();
                println!(
                    "ttsa {}: {} runs, {} failed, final median tracking {:.3e}, incentive {:.3e}",
                    r.rule.name(),
                    r.runs.len(),
                    r.failures,
                    last.map_or(f64::NAN, |e| e.tracking_median),
                    last.map_or(f64::NAN, |e| e.incentive_median)
                );
            }
        }
        Outcome::Sweep(t) => {
            println!("{:>6} {:>6} {:>12} {:>12}", "gamma", "b_exp", "tracking", "incentive");
            for r in &t.rows {
                match &r.skipped {
                    Some(why) => println!("{:>6.3} {:>6.3} skipped: {why}", r.gamma, r.b_exp),
                    None => println!(
                        "{:>6.3} {:>6.3} {:>12.4e} {:>12.4e}",
                        r.gamma, r.b_exp, r.final_tracking_error, r.final_incentive_error
                    ),
                }
            }
        }
        Outcome::Verify(rep) => {
            for e in &rep.entries {
                let tag = match e.status {
                    Status::Pass => "PASS",
                    Status::Fail => "FAIL",
                    Status::Skipped => "SKIP",
                };
                println!("{tag} {:<34} measured {:>12.4e}  bound {:>12.4e}  {}", e.name, e.measured, e.bound, e.detail);
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::Flow(c) => (ExperimentKind::Flow, c),
        Command::Ttsa(c) => (ExperimentKind::Ttsa, c),
        Command::Sweep(c) => (ExperimentKind::Sweep, c),
        Command::Verify(c) => (ExperimentKind::Verify, c),
    };
    let level = if common.quiet {
        "error"
    } else {
        match common.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    };
    env_logger::Builder::new().parse_filters(level).init();

    let cfg = match resolve(kind, common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg, common.jobs) {
        Ok(outcome) => {
            print_outcome(&outcome);
            if outcome.failures() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) if is_config_error(&e) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
