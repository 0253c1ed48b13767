//! Dense linear-algebra helpers shared by every module.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Rank decisions use the
//! conventional singular-value threshold `max(rows, cols) * sigma_max * eps * 100`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Safety factor applied on top of `max(dim) * sigma_max * eps`.
pub const RANK_SAFETY_FACTOR: f64 = 100.0;

/// Singular values sorted in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn rank_tolerance_from(sv: &[f64], rows: usize, cols: usize) -> f64 {
    let smax = sv.first().copied().unwrap_or(0.0);
    rows.max(cols) as f64 * smax * f64::EPSILON * RANK_SAFETY_FACTOR
}

pub fn rank_tolerance(m: &DMatrix<f64>) -> f64 {
    rank_tolerance_from(&singular_values(m), m.nrows(), m.ncols())
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let tol = rank_tolerance_from(&sv, m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > tol).count()
}

/// Smallest singular value, `min(rows, cols)`-th one. Zero for empty input.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    sigma_max(m)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Symmetric positive semidefinite square root via eigendecomposition.
///
/// Fails when the smallest eigenvalue is not strictly positive.
pub fn spd_sqrt(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let min_ev = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_ev > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what,
            min_eigenvalue: min_ev,
        });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

/// Solves `m x = rhs` for symmetric positive definite `m` with a Cholesky factor.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = symmetrize(m).cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what,
        min_eigenvalue: min_eigenvalue(m),
    })?;
    Ok(chol.solve(rhs))
}

/// Moore–Penrose pseudo-inverse with the module rank tolerance.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * smax * f64::EPSILON * RANK_SAFETY_FACTOR;
    let inv = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|&s| if s > tol { 1.0 / s } else { 0.0 }),
    );
    vt.transpose() * DMatrix::from_diagonal(&inv) * u.transpose()
}

/// Vertical concatenation of blocks sharing a column count.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    out
}

/// Horizontal concatenation of blocks sharing a row count.
pub fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, p.ncols())).copy_from(*p);
        c += p.ncols();
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.transpose())) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rank_of_outer_product_is_one() {
        let u = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let v = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 0.5, 2.0]);
        assert_eq!(numerical_rank(&(u * v)), 1);
    }

    #[test]
    fn spd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = spd_sqrt(&m, "m").unwrap();
        assert_relative_eq!(&s * &s, m, epsilon = 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_sqrt(&bad, "bad").is_err());
    }

    #[test]
    fn pinv_of_full_column_rank_is_left_inverse() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let p = pinv(&m);
        assert_relative_eq!(&p * &m, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation_is_one() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m), 1.0, epsilon = 1e-12);
    }
}
