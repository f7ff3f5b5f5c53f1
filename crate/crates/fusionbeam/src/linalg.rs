//! Dense complex linear-algebra helpers shared by the solver modules.
//!
//! Conventions used throughout the crate:
//! - `vec(X)` stacks the columns of `X` (column-major), matching the identity
//!   `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
//! - Hermitian inputs are symmetrized as `(X + Xᴴ)/2` before factorization so
//!   roundoff asymmetry never reaches an eigenvalue or Cholesky routine.
//! - Quantities that are real by theory (traces of Hermitian forms, powers)
//!   are extracted with [`real_part_checked`], which asserts the imaginary
//!   residue is roundoff-sized before discarding it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative eigenvalue floor for positive semidefiniteness assertions.
pub const PSD_EPS: f64 = 1e-9;

/// Tolerance factor for the imaginary residue of theoretically real scalars.
pub const IMAG_EPS: f64 = 1e-9;

/// `(X + Xᴴ)/2`.
pub fn hermitian_part(x: &CMat) -> CMat {
    let half = Complex64::new(0.5, 0.0);
    (x + x.adjoint()) * half
}

/// Frobenius distance from Hermitian symmetry, relative to `1 + ‖X‖`.
pub fn hermitian_defect(x: &CMat) -> f64 {
    (x - x.adjoint()).norm() / (1.0 + x.norm())
}

/// Extracts the real part of a scalar that is real by theory.
///
/// Panics if the imaginary residue exceeds `IMAG_EPS · (1 + |Re|)`; such a
/// violation signals an assembly bug, not a user error.
pub fn real_part_checked(z: Complex64, what: &str) -> f64 {
    assert!(
        z.im.abs() <= IMAG_EPS * (1.0 + z.re.abs()),
        "{what}: imaginary residue {} exceeds tolerance (re = {})",
        z.im,
        z.re
    );
    z.re
}

/// `vec(X)`: columns of `X` stacked into one vector.
pub fn vec_of(x: &CMat) -> CVec {
    CVec::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_of`]: reshapes a stacked vector back into `rows × cols`.
pub fn mat_of(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "mat_of: length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
///
/// Symmetrizes the input first. Returns `(λ, U)` with `X = U diag(λ) Uᴴ` and
/// `λ₁ ≥ λ₂ ≥ …`; the columns of `U` follow the sort.
pub fn hermitian_eigen_desc(x: &CMat) -> (Vec<f64>, CMat) {
    let n = x.nrows();
    let se: SymmetricEigen<Complex64, Dyn> = SymmetricEigen::new(hermitian_part(x));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut u = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &se.eigenvectors.column(src));
    }
    (lambda, u)
}

/// Upper bound on the spectral radius of a Hermitian matrix (Gershgorin).
pub fn gershgorin_bound(x: &CMat) -> f64 {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Cholesky factorization of a Hermitian positive definite complex matrix.
///
/// nalgebra's `Cholesky::new` never fails over complex scalars (a negative
/// pivot just takes an imaginary square root), so this wrapper additionally
/// requires every diagonal entry of the factor to be real and strictly
/// positive, which holds exactly when the Hermitian input is PD.
pub fn hpd_cholesky(x: CMat) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(x)?;
    let l = chol.l_dirty();
    for j in 0..l.nrows() {
        let d = l[(j, j)];
        if !(d.re.is_finite() && d.re > 0.0 && d.im.abs() <= 1e-8 * (1.0 + d.re)) {
            return None;
        }
    }
    Some(chol)
}

/// Verifies `X ⪰ −eps·λ̂max·I` where `λ̂max` is a Gershgorin upper bound on the
/// largest eigenvalue, via Cholesky of the shifted matrix. Cheap relative to a
/// full eigendecomposition; used as an always-on consistency check on matrices
/// that are positive semidefinite by construction.
pub fn check_psd(x: &CMat, eps: f64, what: &str) -> Result<()> {
    let h = hermitian_part(x);
    let scale = gershgorin_bound(&h);
    if scale == 0.0 {
        // Zero matrix is PSD; Gershgorin zero means every entry is zero.
        return Ok(());
    }
    let n = h.nrows();
    let shifted = &h + CMat::identity(n, n) * Complex64::new(eps * scale, 0.0);
    match hpd_cholesky(shifted) {
        Some(_) => Ok(()),
        None => {
            let (lambda, _) = hermitian_eigen_desc(&h);
            Err(Error::Internal(format!(
                "{what}: expected PSD, eigenvalue range [{:+e}, {:+e}]",
                lambda.last().copied().unwrap_or(0.0),
                lambda.first().copied().unwrap_or(0.0),
            )))
        }
    }
}

/// Solves `A X = B` for Hermitian positive definite `A` via Cholesky.
pub fn solve_hpd(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    let chol = hpd_cholesky(hermitian_part(a))
        .ok_or_else(|| Error::Numerical(format!("{what}: Cholesky failed, matrix not PD")))?;
    Ok(chol.solve(b))
}

/// Matrix square root and inverse square root of a Hermitian positive
/// definite matrix, via eigendecomposition. Fails if any eigenvalue is not
/// strictly positive relative to the largest.
pub fn sqrt_and_inv_sqrt(x: &CMat, what: &str) -> Result<(CMat, CMat)> {
    let (lambda, u) = hermitian_eigen_desc(x);
    let lmax = lambda.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 || lambda.iter().any(|&l| l <= 1e-14 * lmax) {
        return Err(Error::Model(format!(
            "{what}: matrix is not positive definite (eigenvalues in [{:+e}, {:+e}])",
            lambda.last().copied().unwrap_or(0.0),
            lmax
        )));
    }
    let n = x.nrows();
    let mut sqrt = CMat::zeros(n, n);
    let mut inv_sqrt = CMat::zeros(n, n);
    for k in 0..n {
        let uk = u.column(k);
        let outer = &uk * uk.adjoint();
        sqrt += &outer * Complex64::new(lambda[k].sqrt(), 0.0);
        inv_sqrt += &outer * Complex64::new(1.0 / lambda[k].sqrt(), 0.0);
    }
    Ok((sqrt, inv_sqrt))
}

/// Real lifting of a complex matrix: `[[Re X, −Im X], [Im X, Re X]]`.
/// Maps Hermitian matrices to symmetric ones and preserves quadratic forms
/// under [`lift_vec`].
pub fn lift_mat(x: &CMat) -> DMatrix<f64> {
    let (r, c) = x.shape();
    let mut out = DMatrix::<f64>::zeros(2 * r, 2 * c);
    for j in 0..c {
        for i in 0..r {
            let z = x[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Real lifting of a complex vector: `[Re z; Im z]`.
pub fn lift_vec(z: &CVec) -> DVector<f64> {
    let n = z.len();
    let mut out = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        out[i] = z[i].re;
        out[i + n] = z[i].im;
    }
    out
}

/// Inverse of [`lift_vec`].
pub fn unlift_vec(v: &DVector<f64>) -> CVec {
    let n = v.len() / 2;
    assert_eq!(v.len(), 2 * n, "unlift_vec: odd length");
    CVec::from_fn(n, |i, _| Complex64::new(v[i], v[i + n]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vec_mat_roundtrip_is_column_major() {
        let x = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let v = vec_of(&x);
        // Columns stacked: (1,3) then (2,4).
        assert_eq!(v[0], c(1.0, 0.0));
        assert_eq!(v[1], c(3.0, 0.0));
        assert_eq!(v[2], c(2.0, 0.0));
        assert_eq!(v[3], c(4.0, 0.0));
        assert_eq!(mat_of(&v, 2, 2), x);
    }

    #[test]
    fn kronecker_vec_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X) on a random-ish fixed instance.
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.0, -1.0), c(2.0, 0.0), c(1.0, 1.0)]);
        let x = CMat::from_row_slice(2, 3, &[
            c(0.3, 0.1), c(-0.2, 0.4), c(1.0, 0.0),
            c(0.7, -0.3), c(0.0, 0.9), c(-1.1, 0.2),
        ]);
        let b = CMat::from_row_slice(3, 2, &[
            c(0.5, 0.0), c(1.0, -0.5),
            c(-0.3, 0.2), c(0.0, 0.0),
            c(0.8, 0.8), c(0.2, -0.1),
        ]);
        let lhs = vec_of(&(&a * &x * &b));
        let rhs = b.transpose().kronecker(&a) * vec_of(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn hermitian_eigen_reconstructs_and_sorts() {
        let x = CMat::from_row_slice(3, 3, &[
            c(2.0, 0.0), c(0.3, 0.4), c(0.0, -0.2),
            c(0.3, -0.4), c(1.0, 0.0), c(0.1, 0.0),
            c(0.0, 0.2), c(0.1, 0.0), c(3.0, 0.0),
        ]);
        let (lambda, u) = hermitian_eigen_desc(&x);
        assert!(lambda.windows(2).all(|w| w[0] >= w[1]));
        let mut rec = CMat::zeros(3, 3);
        for k in 0..3 {
            let uk = u.column(k);
            rec += &uk * uk.adjoint() * c(lambda[k], 0.0);
        }
        assert!((rec - &x).norm() < 1e-12 * x.norm());
        assert!((u.adjoint() * &u - CMat::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn psd_check_accepts_gram_and_zero_rejects_indefinite() {
        let w = CMat::from_row_slice(2, 2, &[c(1.0, 2.0), c(0.0, 1.0), c(3.0, -1.0), c(2.0, 0.0)]);
        let gram = &w * w.adjoint();
        assert!(check_psd(&gram, PSD_EPS, "gram").is_ok());
        assert!(check_psd(&CMat::zeros(4, 4), PSD_EPS, "zero").is_ok());
        let indef = CMat::from_row_slice(2, 2, &[
            c(1.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(-1.0, 0.0),
        ]);
        assert!(check_psd(&indef, PSD_EPS, "indef").is_err());
    }

    #[test]
    fn sqrt_pair_inverts() {
        let w = CMat::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.5, 0.0), c(0.0, -1.0), c(1.5, 0.5)]);
        let x = &w * w.adjoint() + CMat::identity(2, 2) * c(0.1, 0.0);
        let (s, si) = sqrt_and_inv_sqrt(&x, "test").unwrap();
        assert!((&s * &s - &x).norm() < 1e-12 * x.norm());
        assert!((&s * &si - CMat::identity(2, 2)).norm() < 1e-12);
        assert!(sqrt_and_inv_sqrt(&CMat::zeros(2, 2), "zero").is_err());
    }

    #[test]
    fn lifting_preserves_quadratic_forms() {
        let q = {
            let w =
                CMat::from_row_slice(2, 2, &[c(1.0, 1.0), c(2.0, 0.0), c(0.0, 3.0), c(1.0, -1.0)]);
            &w * w.adjoint()
        };
        let z = CVec::from_column_slice(&[c(0.3, -0.7), c(1.2, 0.4)]);
        let direct = real_part_checked((z.adjoint() * &q * &z)[(0, 0)], "form");
        let v = lift_vec(&z);
        let lifted = (v.transpose() * lift_mat(&q) * &v)[(0, 0)];
        assert!((direct - lifted).abs() < 1e-12);
        assert_eq!(unlift_vec(&v), z);
    }

    #[test]
    #[should_panic(expected = "imaginary residue")]
    fn real_part_checked_rejects_large_imag() {
        real_part_checked(c(1.0, 1e-3), "bad");
    }
}
