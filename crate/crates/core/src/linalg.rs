//! Dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices in `f64`. The
//! helpers wrap the decompositions we rely on (SVD, symmetric eigen,
//! eigendecomposition-based SPD inversion) with the conventions used
//! throughout: symmetric inputs are re-symmetrized before factorization,
//! and induced 2-norms come from singular values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition-number ceiling above which SPD inversion is refused.
pub const SPD_COND_LIMIT: f64 = 1e12;

/// Induced 2-norm (largest singular value). Zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `(m + m^T) / 2`, guarding downstream symmetric factorizations
/// against round-off asymmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetrized input, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev = symmetrize(m).symmetric_eigenvalues();
    ev.as_mut_slice()
        .sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev[ev.len() - 1]
}

/// Inverse of a symmetric positive-definite matrix via eigendecomposition.
///
/// The input is symmetrized first and the result re-symmetrized, so the
/// output stays SPD under round-off. Fails when the matrix is not PD or
/// its condition number exceeds [`SPD_COND_LIMIT`].
pub fn spd_inverse(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { name, min_eig: min });
    }
    let cond = max / min;
    if cond > SPD_COND_LIMIT {
        return Err(Error::Singular {
            name,
            cond,
            limit: SPD_COND_LIMIT,
        });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let v = &eig.eigenvectors;
    let inv = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    Ok(symmetrize(&inv))
}

/// Numeric rank: count of singular values above `rel_tol * sigma_max`.
/// Returns `(rank, sigma_max)`.
pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> (usize, f64) {
    if m.is_empty() {
        return (0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return (0, 0.0);
    }
    let rank = sv.iter().filter(|&&s| s > rel_tol * smax).count();
    (rank, smax)
}

/// Orthonormal basis of the row space of `m`, returned as columns of a
/// `ncols(m) x rank` matrix. Uses the right singular vectors of `m`.
pub fn row_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested with V^T");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > rel_tol * smax).count()
    };
    v_t.rows(0, rank).transpose()
}

/// Frobenius norm of `a - b`.
pub fn frob_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}
