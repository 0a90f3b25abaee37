//! Symmetric positive definite matrices with the affine-invariant metric.
//!
//! Points are m×m matrices stored row-major. Every operation goes through a
//! symmetric eigendecomposition, so all closed forms are applied to exactly
//! symmetric inputs.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub(super) fn to_matrix(m: usize, coords: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(m, m, coords)
}

pub(super) fn to_coords(a: &DMatrix<f64>) -> Vec<f64> {
    let m = a.nrows();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(0.5 * (a[(i, j)] + a[(j, i)]));
        }
    }
    out
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Apply a scalar function to the eigenvalues of a symmetric matrix.
fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let d = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&d) * v.transpose()))
}

pub(super) fn asymmetry(m: usize, coords: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            worst = worst.max((coords[i * m + j] - coords[j * m + i]).abs());
        }
    }
    worst
}

pub(super) fn min_eigenvalue(m: usize, coords: &[f64]) -> f64 {
    SymmetricEigen::new(symmetrize(&to_matrix(m, coords)))
        .eigenvalues
        .min()
}

/// `(p^{1/2}, p^{-1/2})`
fn sqrt_pair(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(symmetrize(p));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidPoint("SPD matrix has a non-positive eigenvalue".into()));
    }
    let v = &eig.eigenvectors;
    let s = eig.eigenvalues.map(f64::sqrt);
    let si = s.map(|x| 1.0 / x);
    Ok((
        symmetrize(&(v * DMatrix::from_diagonal(&s) * v.transpose())),
        symmetrize(&(v * DMatrix::from_diagonal(&si) * v.transpose())),
    ))
}

pub(super) fn exp(m: usize, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let (s, si) = sqrt_pair(&to_matrix(m, p))?;
    let inner = &si * to_matrix(m, v) * &si;
    let out = &s * sym_apply(&inner, f64::exp) * &s;
    let coords = to_coords(&out);
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("SPD exponential overflowed".into()));
    }
    Ok(coords)
}

pub(super) fn log(m: usize, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let (s, si) = sqrt_pair(&to_matrix(m, p))?;
    let inner = &si * to_matrix(m, q) * &si;
    let eig = SymmetricEigen::new(symmetrize(&inner));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidPoint("SPD matrix has a non-positive eigenvalue".into()));
    }
    let v = &eig.eigenvectors;
    let l = eig.eigenvalues.map(f64::ln);
    let logm = v * DMatrix::from_diagonal(&l) * v.transpose();
    Ok(to_coords(&(&s * logm * &s)))
}

pub(super) fn dist(m: usize, p: &[f64], q: &[f64]) -> Result<f64> {
    let (_, si) = sqrt_pair(&to_matrix(m, p))?;
    let inner = &si * to_matrix(m, q) * &si;
    let eig = SymmetricEigen::new(symmetrize(&inner));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidPoint("SPD matrix has a non-positive eigenvalue".into()));
    }
    Ok(eig.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// `tr(p⁻¹ u p⁻¹ v)`
pub(super) fn inner(m: usize, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let (_, si) = sqrt_pair(&to_matrix(m, p))?;
    let a = &si * to_matrix(m, u) * &si;
    let b = &si * to_matrix(m, v) * &si;
    Ok(a.component_mul(&b).sum())
}

/// `p^{1/2} E p^{1/2}` for a Frobenius-orthonormal basis `E` of symmetric
/// matrices; orthonormal under the affine-invariant metric at `p`.
pub(super) fn tangent_basis(m: usize, p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (s, _) = sqrt_pair(&to_matrix(m, p))?;
    let mut basis = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in i..m {
            let mut e = DMatrix::zeros(m, m);
            if i == j {
                e[(i, i)] = 1.0;
            } else {
                e[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
                e[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
            }
            basis.push(to_coords(&(&s * e * &s)));
        }
    }
    Ok(basis)
}
