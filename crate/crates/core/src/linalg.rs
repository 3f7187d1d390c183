//! Small dense complex linear-algebra helpers shared by the simulator modules.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Max absolute entry of `U†U - 1`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let n = u.ncols();
    let gram = u.adjoint() * u;
    max_abs_diff(&gram, &CMatrix::identity(n, n))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff_vec(a: &CVector, b: &CVector) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `<a|b>` with the conjugate on the left argument.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Diagonal 0/1 projector onto the given basis indices.
pub fn diagonal_projector(dim: usize, support: impl IntoIterator<Item = usize>) -> CMatrix {
    let mut p = CMatrix::zeros(dim, dim);
    for k in support {
        p[(k, k)] = ONE;
    }
    p
}

pub fn basis_vector(dim: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[k] = ONE;
    v
}
