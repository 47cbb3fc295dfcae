//! Two-player coupled oscillator game: `ℓ_i(x) = −θ_i cos(x_i) + cos(x₁ − x₂)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BoxSpace, GameModel, PseudoGradient};
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorGameSpec {
    pub theta: [f64; 2],
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Fall back to a grid-certified monotonicity constant when the
    /// Gershgorin bound fails.
    pub allow_grid_certificate: bool,
}

impl Default for OscillatorGameSpec {
    fn default() -> Self {
        Self {
            theta: [4.2, 5.0],
            lower: [-FRAC_PI_3; 2],
            upper: [FRAC_PI_3; 2],
            allow_grid_certificate: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OscillatorGame {
    theta: [f64; 2],
}

impl OscillatorGame {
    pub fn new(theta: [f64; 2]) -> Self {
        Self { theta }
    }

    pub fn theta(&self) -> [f64; 2] {
        self.theta
    }

    /// Per-agent nominal costs.
    pub fn costs(&self, x: &Vector) -> Vector {
        let c = (x[0] - x[1]).cos();
        Vector::from_vec(vec![
            -self.theta[0] * x[0].cos() + c,
            -self.theta[1] * x[1].cos() + c,
        ])
    }

    /// Gershgorin lower bound `min_i {θ_i cos x_i − cos Δx − |cos Δx|}` at `x`.
    pub fn gershgorin_at(&self, x: &Vector) -> f64 {
        let c = (x[0] - x[1]).cos();
        (0..2)
            .map(|i| self.theta[i] * x[i].cos() - c - c.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Worst case of [`gershgorin_at`](Self::gershgorin_at) over a box inside
    /// `(−π/2, π/2)²`: `min_i θ_i min cos(x_i) − 2`.
    pub fn gershgorin_box_bound(&self, space: &BoxSpace) -> f64 {
        (0..2)
            .map(|i| self.theta[i] * space.lower()[i].cos().min(space.upper()[i].cos()) - 2.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Lipschitz constant of `DG0` on the box:
    /// `max θ_i · max|sin x_i| + 2√2` (the coupling term has norm 2 and
    /// `|Δx − Δy| ≤ √2 ‖x − y‖`).
    pub fn jacobian_lipschitz(&self, space: &BoxSpace) -> f64 {
        let smax = (0..2)
            .map(|i| space.lower()[i].abs().max(space.upper()[i].abs()).min(FRAC_PI_2).sin())
            .fold(0.0, f64::max);
        self.theta[0].max(self.theta[1]) * smax + 2.0 * SQRT_2
    }
}

impl PseudoGradient for OscillatorGame {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &Vector) -> Vector {
        let s = (x[0] - x[1]).sin();
        Vector::from_vec(vec![
            self.theta[0] * x[0].sin() - s,
            self.theta[1] * x[1].sin() + s,
        ])
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let c = (x[0] - x[1]).cos();
        Matrix::from_row_slice(
            2,
            2,
            &[self.theta[0] * x[0].cos() - c, c, c, self.theta[1] * x[1].cos() - c],
        )
    }

    fn potential(&self, x: &Vector, p: &Vector) -> Option<f64> {
        Some(
            -self.theta[0] * x[0].cos() - self.theta[1] * x[1].cos()
                + (x[0] - x[1]).cos()
                + p.dot(x),
        )
    }

    fn analytic_monotonicity_bound(&self, space: &BoxSpace) -> Option<f64> {
        Some(self.gershgorin_box_bound(space))
    }
}

/// Builds the oscillator game with `m` from the Gershgorin corner bound and
/// the potential solver registered.
pub fn build_oscillator(spec: &OscillatorGameSpec) -> Result<GameModel> {
    if spec.theta.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Construction(format!("θ = {:?} must be positive", spec.theta)));
    }
    let space = BoxSpace::new(spec.lower.to_vec(), spec.upper.to_vec())?;
    if space.lower().iter().chain(space.upper()).any(|b| b.abs() >= FRAC_PI_2) {
        return Err(Error::Construction("oscillator box must lie inside (−π/2, π/2)²".into()));
    }
    let game = OscillatorGame::new(spec.theta);
    let half_m = game.gershgorin_box_bound(&space);
    let l1 = game.jacobian_lipschitz(&space);
    let model = if half_m > 0.0 {
        GameModel::new("oscillator-2", space, Arc::new(game), 2.0 * half_m, l1)?
    } else if spec.allow_grid_certificate {
        GameModel::with_grid_certificate("oscillator-2", space, Arc::new(game), l1)?
    } else {
        let need: Vec<f64> = (0..2)
            .map(|i| 2.0 / spec.lower[i].cos().min(spec.upper[i].cos()))
            .collect();
        return Err(Error::Construction(format!(
            "Gershgorin bound fails: need θ_i > {need:?}, got θ = {:?}",
            spec.theta
        )));
    };
    model.register_potential(9)
}
