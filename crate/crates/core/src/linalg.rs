//! Small dense complex helpers shared by the evaluators.
//!
//! Vectors are plain `Vec<Complex64>`; matrices go through `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CVec = Vec<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// `aᴴ b`.
#[inline]
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn zeros(n: usize) -> CVec {
    vec![ZERO; n]
}

pub fn mat_vec(m: &CMat, v: &[Complex64]) -> CVec {
    debug_assert_eq!(m.ncols(), v.len());
    (0..m.nrows())
        .map(|r| (0..m.ncols()).fold(ZERO, |acc, c| acc + m[(r, c)] * v[c]))
        .collect()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn hermitian_min_eigenvalue(m: &CMat) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}
