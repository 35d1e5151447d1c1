//! Dense Hermitian eigendecomposition and the helpers built on it: unitary
//! exponentials and truncated least-squares solves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Columns are orthonormal eigenvectors matching `values`.
    pub vectors: DMatrix<Complex64>,
}

pub fn eigh(m: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "eigh needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let herm = hermitian_defect(m);
    if herm > 1e-9 * (1.0 + max_abs(m)) {
        return Err(Error::InvalidArgument(format!(
            "matrix is not Hermitian (defect {herm:e})"
        )));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of |M − M†|.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `exp(−i·t·A)` for Hermitian `A`.
pub fn unitary_exp(a: &DMatrix<Complex64>, t: f64) -> Result<DMatrix<Complex64>> {
    let eig = eigh(a)?;
    let phases: Vec<Complex64> = eig
        .values
        .iter()
        .map(|&l| Complex64::from_polar(1.0, -t * l))
        .collect();
    Ok(reconstruct(&eig.vectors, &phases))
}

/// `V · diag(w) · V†`.
fn reconstruct(v: &DMatrix<Complex64>, w: &[Complex64]) -> DMatrix<Complex64> {
    let n = v.nrows();
    let mut scaled = v.clone();
    for (c, &wc) in w.iter().enumerate() {
        for r in 0..n {
            scaled[(r, c)] *= wc;
        }
    }
    scaled * v.adjoint()
}

/// Result of a truncated symmetric solve.
#[derive(Debug, Clone)]
pub struct TruncatedSolve {
    pub x: DVector<f64>,
    /// Number of eigen-directions kept (|λ| ≥ cutoff).
    pub rank: usize,
}

/// Minimum-norm least-squares solution of `M x = b` for real symmetric `M`,
/// discarding eigen-directions with |λ| < `cutoff`.
pub fn solve_symmetric_truncated(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    cutoff: f64,
) -> Result<TruncatedSolve> {
    if m.nrows() != b.len() || !m.is_square() {
        return Err(Error::InvalidArgument("solve shape mismatch".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let proj = eig.eigenvectors.transpose() * b;
    let mut coeffs = DVector::zeros(b.len());
    let mut rank = 0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() >= cutoff {
            coeffs[i] = proj[i] / l;
            rank += 1;
        }
    }
    Ok(TruncatedSolve {
        x: &eig.eigenvectors * coeffs,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigh_sorts_and_reconstructs() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(-1.0, 0.0)],
        );
        let eig = eigh(&m).unwrap();
        assert!(eig.values[0] <= eig.values[1]);
        let w: Vec<_> = eig.values.iter().map(|&v| c(v, 0.0)).collect();
        let back = reconstruct(&eig.vectors, &w);
        assert!(max_abs(&(back - m)) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(eigh(&m).is_err());
    }

    #[test]
    fn unitary_exp_of_z_is_phase() {
        let z = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let u = unitary_exp(&z, 0.3).unwrap();
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -0.3)).norm() < 1e-14);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, 0.3)).norm() < 1e-14);
        let eye = DMatrix::<Complex64>::identity(2, 2);
        assert!(max_abs(&(u.adjoint() * &u - eye)) < 1e-14);
    }

    #[test]
    fn truncated_solve_drops_null_direction() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1e-12]);
        let b = DVector::from_vec(vec![4.0, 5.0]);
        let s = solve_symmetric_truncated(&m, &b, 1e-8).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.x[0] - 2.0).abs() < 1e-14);
        assert!(s.x[1].abs() < 1e-14);
    }
}
