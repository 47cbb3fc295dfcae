//! Quadratic aggregative game over a directed network.
//!
//! Agent `i` pays `½(q_i x_i² + a Σ_j w_ij x_i x_j)`. The registered
//! pseudo-gradient is `G0(x) = Mx` with `M = Q + aW`; see
//! [`AggregativeGame::literal_cost_gradient`] for the relation to the cost
//! formula.

use std::sync::Arc;

use nalgebra::LU;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BoxSpace, GameModel, PseudoGradient};
use crate::linalg::{self, Matrix, Vector};

/// Seed of the shipped `aggregative-5` instance.
pub const DEFAULT_SEED: u64 = 1;

/// Fraction of the coupling bound `λ_min(Q)/‖Sym(W)‖₂` used for the default `a`.
pub const DEFAULT_COUPLING_FRACTION: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregativeGameSpec {
    /// Diagonal of `Q`.
    pub q: Vec<f64>,
    /// Row-major adjacency matrix `W`.
    pub w: Vec<Vec<f64>>,
    pub a: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AggregativeGameSpec {
    /// Random instance: `q_i ~ U[1, 2]`, off-diagonal `w_ij ~ U[0, 1]` normalized
    /// to unit row sums, `a` at [`DEFAULT_COUPLING_FRACTION`] of the coupling
    /// bound, box `[−2, 2]ⁿ`. Draws come from ChaCha8 seeded with `seed`.
    pub fn seeded(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..2.0)).collect();
        let mut w = vec![vec![0.0; n]; n];
        for (i, row) in w.iter_mut().enumerate() {
            for (j, wij) in row.iter_mut().enumerate() {
                if i != j {
                    *wij = rng.gen_range(0.0..1.0);
                }
            }
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        let mut spec = Self {
            q,
            w,
            a: 0.0,
            lower: vec![-2.0; n],
            upper: vec![2.0; n],
        };
        spec.a = DEFAULT_COUPLING_FRACTION * spec.coupling_bound();
        spec
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn w_matrix(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| self.w[i][j])
    }

    /// `λ_min(Q) / ‖Sym(W)‖₂`; couplings strictly below it certify monotonicity.
    pub fn coupling_bound(&self) -> f64 {
        let qmin = self.q.iter().copied().fold(f64::INFINITY, f64::min);
        let sw = linalg::spectral_norm(&linalg::sym(&self.w_matrix()));
        if sw == 0.0 {
            f64::INFINITY
        } else {
            qmin / sw
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Construction("aggregative game needs at least one agent".into()));
        }
        if self.w.len() != n || self.w.iter().any(|r| r.len() != n) {
            return Err(Error::Construction(format!("W must be {n}×{n}")));
        }
        if let Some((i, q)) = self.q.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
            return Err(Error::Construction(format!("q[{i}] = {q} must be positive")));
        }
        for (i, row) in self.w.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::Construction(format!("W[{i}][{i}] = {} must be zero", row[i])));
            }
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Construction(format!("row {i} of W has negative entries")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Construction(format!("row {i} of W sums to {s}, expected 1")));
            }
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::Construction(format!("coupling a = {} must be nonnegative", self.a)));
        }
        let bound = self.coupling_bound();
        if self.a > 0.0 && !(self.a < bound) {
            return Err(Error::Construction(format!(
                "coupling bound violated: a = {} ≥ λ_min(Q)/‖Sym(W)‖₂ = {}",
                self.a, bound
            )));
        }
        Ok(())
    }
}

impl Default for AggregativeGameSpec {
    fn default() -> Self {
        Self::seeded(5, DEFAULT_SEED)
    }
}

#[derive(Debug)]
pub struct AggregativeGame {
    q: Vector,
    w: Matrix,
    a: f64,
    m: Matrix,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl AggregativeGame {
    pub fn new(spec: &AggregativeGameSpec) -> Result<Self> {
        spec.validate()?;
        let q = Vector::from_column_slice(&spec.q);
        let w = spec.w_matrix();
        let m = Matrix::from_diagonal(&q) + &w * spec.a;
        let lu = m.clone().lu();
        Ok(Self { q, w, a: spec.a, m, lu })
    }

    pub fn q(&self) -> &Vector {
        &self.q
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    /// Per-agent costs exactly as written: `½(q_i x_i² + a Σ_j w_ij x_i x_j)`.
    pub fn literal_costs(&self, x: &Vector) -> Vector {
        let wx = &self.w * x;
        Vector::from_fn(x.len(), |i, _| 0.5 * (self.q[i] * x[i] * x[i] + self.a * x[i] * wx[i]))
    }

    /// Own-derivative of the literal costs: `q_i x_i + (a/2)(Wx)_i` (zero diagonal).
    /// The registered `G0 = (Q + aW)x` corresponds to doubling the coupling term.
    pub fn literal_cost_gradient(&self, x: &Vector) -> Vector {
        self.q.component_mul(x) + (&self.w * x) * (0.5 * self.a)
    }
}

impl PseudoGradient for AggregativeGame {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn eval(&self, x: &Vector) -> Vector {
        &self.m * x
    }

    fn jacobian(&self, _x: &Vector) -> Matrix {
        self.m.clone()
    }

    fn linear_matrix(&self) -> Option<&Matrix> {
        Some(&self.m)
    }

    fn closed_form_response(&self, p: &Vector) -> Option<Vector> {
        self.lu.solve(&(-p))
    }

    fn best_response(&self, x: &Vector, p: &Vector) -> Option<Vector> {
        let rhs = p + (&self.w * x) * self.a;
        Some(-rhs.component_div(&self.q))
    }

    fn analytic_monotonicity_bound(&self, _space: &BoxSpace) -> Option<f64> {
        Some(linalg::lambda_min_sym(&self.m))
    }
}

/// Builds the game with `m = 2 λ_min(Sym(M))`, `L1 = 0` and the closed-form
/// response registered. The potential is registered when `M` is symmetric.
pub fn build_aggregative(spec: &AggregativeGameSpec) -> Result<GameModel> {
    let game = Arc::new(AggregativeGame::new(spec)?);
    let lmin = linalg::lambda_min_sym(game.m());
    if lmin <= 0.0 {
        return Err(Error::Construction(format!("λ_min(Sym(M)) = {lmin} is not positive")));
    }
    let space = BoxSpace::new(spec.lower.clone(), spec.upper.clone())?;
    let name = format!("aggregative-{}", spec.n());
    GameModel::new(name, space, game, 2.0 * lmin, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_spec_is_valid_and_reproducible() {
        let a = AggregativeGameSpec::seeded(5, 7);
        let b = AggregativeGameSpec::seeded(5, 7);
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.q.iter().all(|q| (1.0..2.0).contains(q)));
    }

    #[test]
    fn zero_coupling_is_diagonal() {
        let mut spec = AggregativeGameSpec::seeded(4, 3);
        spec.a = 0.0;
        let g = AggregativeGame::new(&spec).unwrap();
        assert_eq!(g.m(), &Matrix::from_diagonal(g.q()));
    }

    #[test]
    fn coupling_violation_is_reported() {
        let mut spec = AggregativeGameSpec::seeded(5, 1);
        spec.a = 1.01 * spec.coupling_bound();
        let err = build_aggregative(&spec).unwrap_err();
        assert!(err.to_string().contains("coupling bound violated"), "{err}");
    }

    #[test]
    fn bad_adjacency_is_rejected() {
        let mut spec = AggregativeGameSpec::seeded(3, 1);
        spec.w[0][0] = 0.1;
        assert!(spec.validate().is_err());
        let mut spec = AggregativeGameSpec::seeded(3, 1);
        spec.w[1][0] += 0.2;
        assert!(spec.validate().is_err());
    }
}
