//! Random matrix constructors shared by the oracle suite and tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Symmetric matrix with i.i.d. standard normal upper triangle.
pub fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = StandardNormal.sample(rng);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// `BBᵀ / n` for a square Gaussian `B`: symmetric positive semidefinite.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let a = &b * b.transpose() / n as f64;
    (&a + a.transpose()) * 0.5
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DVector::from_iterator(n, (0..n).map(|i| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    q * DMatrix::from_diagonal(&signs)
}

/// `Q diag(λ) Qᵀ` for a random orthogonal `Q`.
pub fn with_spectrum<R: Rng + ?Sized>(eigenvalues: &[f64], rng: &mut R) -> DMatrix<f64> {
    let n = eigenvalues.len();
    let q = random_orthogonal(n, rng);
    let a = &q * DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues)) * q.transpose();
    (&a + a.transpose()) * 0.5
}
