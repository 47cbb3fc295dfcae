//! Reference computations kept independent of the library's numerics.

#![allow(dead_code)]

use socialgrad::linalg::{Matrix, Vector};

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn sym(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &Matrix, b: &Vector) -> Vector {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        m.swap_rows(col, piv);
        x.swap_rows(col, piv);
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            for c in col..n {
                m[(r, c)] -= f * m[(col, c)];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[(r, c)] * x[c]).sum();
        x[r] = (x[r] - s) / m[(r, r)];
    }
    x
}

pub fn dense_inverse(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &dense_solve(a, &e));
    }
    inv
}

pub fn clamp(x: &Vector, lo: &[f64], hi: &[f64]) -> Vector {
    Vector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
}

/// Exact `V̇ = −gᵀ M⁻¹ g` with `g = x*(p) − x†` for a linear game and the
/// centered quadratic.
pub fn linear_lyapunov_rate(m: &Matrix, x_dagger: &Vector, p: &Vector) -> f64 {
    let x = dense_solve(m, &(-p));
    let g = x - x_dagger;
    -g.dot(&dense_solve(m, &g))
}

/// Smallest distance from `x` to a face of the box.
pub fn face_distance(x: &Vector, lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - lo[i]).min(hi[i] - x[i]))
        .fold(f64::INFINITY, f64::min)
}

pub fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = Matrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let ev = jacobi_eigenvalues(&a);
        let s = std::f64::consts::SQRT_2;
        for (got, want) in ev.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((got - want).abs() < 1e-14);
        }
    }
}
