//! Seeded initial conditions.
//!
//! Every run index owns a ChaCha8 stream (`seed`, stream `index + 1`), so a
//! run's draws do not depend on how many runs are requested or on the order
//! in which workers pick them up. Stream 0 is reserved for the acceptance-rate
//! pilot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::planner::IncentiveProblem;

const PILOT_DRAWS: usize = 20_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// RNG for run `index` under `seed`.
pub fn run_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub index: usize,
    pub x0: Vec<f64>,
    pub p0: Vec<f64>,
    /// Equilibrium induced by `p0`.
    pub x_bar: Vec<f64>,
}

impl InitialCondition {
    pub fn x0(&self) -> Vector {
        Vector::from_column_slice(&self.x0)
    }

    pub fn p0(&self) -> Vector {
        Vector::from_column_slice(&self.p0)
    }
}

fn uniform_box<R: Rng>(problem: &IncentiveProblem, rng: &mut R) -> Vector {
    let space = problem.game().space();
    Vector::from_fn(space.dim(), |i, _| rng.gen_range(space.lower()[i]..space.upper()[i]))
}

fn accept(problem: &IncentiveProblem, x: &Vector) -> bool {
    problem.game().space().is_interior(x) && problem.objective().gap(x) <= problem.geometry().c
}

/// Fraction of uniform box draws landing in the x-space sublevel region.
pub fn pilot_acceptance_rate(problem: &IncentiveProblem, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let hits = (0..PILOT_DRAWS)
        .filter(|_| accept(problem, &uniform_box(problem, &mut rng)))
        .count();
    hits as f64 / PILOT_DRAWS as f64
}

/// Draws `count` initial conditions: `x̄` uniform in
/// `{x ∈ int X : Φ(x) − Φ(x†) ≤ c}` by rejection, `p0 = −G0(x̄)` and `x0`
/// uniform in the box.
pub fn sample_initial_conditions(problem: &IncentiveProblem, seed: u64, count: usize) -> Result<Vec<InitialCondition>> {
    let rate = pilot_acceptance_rate(problem, seed);
    if rate < MIN_ACCEPTANCE {
        return Err(Error::SamplingRate { rate });
    }
    let max_tries = (1000.0 / rate).ceil() as usize;
    (0..count)
        .map(|index| {
            let mut rng = run_rng(seed, index);
            let x_bar = (0..max_tries)
                .map(|_| uniform_box(problem, &mut rng))
                .find(|x| accept(problem, x))
                .ok_or(Error::SamplingRate { rate })?;
            let x0 = uniform_box(problem, &mut rng);
            let p0 = -problem.game().g0(&x_bar);
            Ok(InitialCondition {
                index,
                x0: x0.iter().copied().collect(),
                p0: p0.iter().copied().collect(),
                x_bar: x_bar.iter().copied().collect(),
            })
        })
        .collect()
}
