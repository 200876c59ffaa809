//! Band matrices, band LU and the Hermitian eigensolver.

pub mod band;
pub mod eigen;
pub mod sparse;

pub use band::{BandLu, BandMatrix};
pub use eigen::{lowest, nearest, Eigen, EigenOptions};
pub use sparse::CsrMatrix;

use num_complex::Complex64;

/// ⟨x|y⟩
pub fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// y += a·x
pub fn axpy(a: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
