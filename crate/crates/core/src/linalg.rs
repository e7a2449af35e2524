//! Matrix functions of small symmetric matrices.
//!
//! Dimensions here are tiny (d <= 8), so everything goes through a full
//! symmetric eigendecomposition with eigenvalues floored at [`EIGEN_FLOOR`].

use nalgebra::{DMatrix, DVector};

use crate::Real;

pub const EIGEN_FLOOR: f64 = 1e-12;

/// Applies `f` to the eigenvalues of the symmetric matrix `m`.
pub fn sym_apply<T: Real>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let floor = T::of(EIGEN_FLOOR);
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| f(l.max(floor)));
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&vals) * v.transpose()
}

pub fn sym_inverse<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    sym_apply(m, |l| T::one() / l)
}

pub fn sym_sqrt<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    sym_apply(m, |l| l.sqrt())
}

pub fn sym_inv_sqrt<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    sym_apply(m, |l| T::one() / l.sqrt())
}

pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    m.clone().symmetric_eigen().eigenvalues
}

pub fn is_symmetric<T: Real>(m: &DMatrix<T>, tol: T) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Symmetrizes `m` in place as `(m + mᵀ) / 2`.
pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = T::of(0.5);
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = spd();
        let p = &m * sym_inverse(&m);
        assert_relative_eq!(p, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = spd();
        let r = sym_sqrt(&m);
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
        let ri = sym_inv_sqrt(&m);
        assert_relative_eq!(&ri * &m * &ri, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn symmetry_check() {
        let mut m = spd();
        assert!(is_symmetric(&m, 0.0));
        m[(0, 1)] += 1e-6;
        assert!(!is_symmetric(&m, 1e-9));
        symmetrize(&mut m);
        assert!(is_symmetric(&m, 0.0));
    }
}
