//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenvalue of `Sym(A)`.
pub fn lambda_min_sym(a: &Matrix) -> f64 {
    sym_eigenvalues(&sym(a))[0]
}

/// Largest eigenvalue of `Sym(A)` (the logarithmic 2-norm of `A`).
pub fn lambda_max_sym(a: &Matrix) -> f64 {
    *sym_eigenvalues(&sym(a)).last().expect("non-empty matrix")
}

/// Singular values, ascending.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    sv
}

/// Spectral norm `‖A‖₂`.
pub fn spectral_norm(a: &Matrix) -> f64 {
    *singular_values(a).last().expect("non-empty matrix")
}

/// Gershgorin lower bound on the spectrum of a symmetric matrix:
/// `min_i (a_ii − Σ_{j≠i} |a_ij|)`.
pub fn gershgorin_lower(a: &Matrix) -> f64 {
    (0..a.nrows())
        .map(|i| {
            let off: f64 = (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            a[(i, i)] - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// Central finite-difference Jacobian of `f` at `x` with step `h`.
pub fn central_jacobian<F>(f: F, x: &Vector, h: f64) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = Matrix::zeros(m, n);
    let mut probe = x.clone();
    for j in 0..n {
        probe[j] = x[j] + h;
        let fp = f(&probe);
        probe[j] = x[j] - h;
        let fm = f(&probe);
        probe[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gershgorin_bounds_spectrum() {
        let a = Matrix::from_row_slice(2, 2, &[3.2, 1.0, 1.0, 4.0]);
        let lo = gershgorin_lower(&a);
        assert!((lo - 2.2).abs() < 1e-15);
        assert!(lambda_min_sym(&a) >= lo);
    }

    #[test]
    fn central_jacobian_of_linear_map() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 4.0]);
        let x = Vector::from_vec(vec![0.3, -0.7]);
        let jac = central_jacobian(|v| &m * v, &x, 1e-6);
        assert!((jac - &m).amax() < 1e-8);
    }
}
