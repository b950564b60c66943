//! Dense symmetric-matrix helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{lit, tol, Real};

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending
/// order; column `i` of `vectors` pairs with `values[i]`.
#[derive(Clone, Debug)]
pub struct SymEigen<T: Real> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Real> SymEigen<T> {
    /// Rebuilds `U diag(f(λ)) Uᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> DMatrix<T> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

/// Largest absolute entry of `a - aᵀ`.
pub fn asymmetry<T: Real>(a: &DMatrix<T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric<T: Real>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    let asym = asymmetry(a);
    if asym > tol(1e-10) {
        return Err(Error::Domain(format!("{what} is not symmetric (max asymmetry {asym:e})")));
    }
    Ok(())
}

/// `(a + aᵀ) / 2`.
pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigendecompose<T: Real>(s: &DMatrix<T>) -> Result<SymEigen<T>> {
    check_symmetric(s, "eigendecomposition input")?;
    let eig = SymmetricEigen::new(symmetrize(s));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only (no eigenvectors), unsorted.
pub(crate) fn sym_eigenvalues<T: Real>(s: &DMatrix<T>) -> DVector<T> {
    if s.nrows() == 1 {
        return DVector::from_element(1, s[(0, 0)]);
    }
    symmetrize(s).symmetric_eigenvalues()
}

/// Inverse and log-determinant of an SPD matrix via Cholesky.
pub fn spd_inverse_logdet<T: Real>(a: &DMatrix<T>, what: &str) -> Result<(DMatrix<T>, T)> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain(format!("{what} is not positive definite")))?;
    let logdet = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, &d| acc + d.ln())
        * lit::<T>(2.0);
    Ok((symmetrize(&chol.inverse()), logdet))
}

pub fn is_positive_definite<T: Real>(a: &DMatrix<T>) -> bool {
    a.clone().cholesky().is_some()
}

/// Max-norm `‖a‖∞` over entries.
pub fn max_abs<T: Real>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_small_matrices() {
        let e = sym_eigendecompose(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);

        let e = sym_eigendecompose(&DMatrix::from_row_slice(2, 2, &[3.0f64, 0.0, 0.0, 1.0])).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 3.0).abs() < 1e-14);

        // characteristic polynomial (2-λ)² - 1 = 0 → λ ∈ {1, 3}
        let e = sym_eigendecompose(&DMatrix::from_row_slice(2, 2, &[2.0f64, 1.0, 1.0, 2.0])).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12 && (e.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let a = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let s = &a * a.transpose() + DMatrix::identity(5, 5);
        let e = sym_eigendecompose(&s).unwrap();
        assert!(max_abs(&(e.map_spectrum(|x| x) - &s)) <= 1e-8);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!(max_abs(&(gram - DMatrix::identity(5, 5))) <= 1e-8);
        for w in e.values.as_slice().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eigendecompose(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn logdet_matches_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let (inv, ld) = spd_inverse_logdet(&a, "a").unwrap();
        assert!((ld - 6f64.ln()).abs() < 1e-14);
        assert!((inv[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!(spd_inverse_logdet(&(-a), "neg").is_err());
    }
}
