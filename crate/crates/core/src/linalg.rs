//! Complex dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// One draw from CN(0, variance): real and imaginary parts are i.i.d.
/// N(0, variance / 2).
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Vector of i.i.d. CN(0, variance) entries.
pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVector {
    CVector::from_fn(len, |_, _| complex_normal(rng, variance))
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    frobenius(&(a - b)) / frobenius(b)
}

pub fn diag_matrix(d: &[f64]) -> CMatrix {
    let n = d.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, &v) in d.iter().enumerate() {
        m[(i, i)] = Complex64::new(v, 0.0);
    }
    m
}

/// `acc += x yᴴ`, written against the column-major storage.
pub fn add_outer(acc: &mut CMatrix, x: &CVector, y: &CVector) {
    let n = x.len();
    debug_assert_eq!(acc.nrows(), n);
    debug_assert_eq!(acc.ncols(), y.len());
    let xs = x.as_slice();
    let data = acc.as_mut_slice();
    for (j, yj) in y.iter().enumerate() {
        let c = yj.conj();
        let col = &mut data[j * n..(j + 1) * n];
        for (a, xi) in col.iter_mut().zip(xs) {
            *a += xi * c;
        }
    }
}

/// `acc += x xᴴ` on the upper triangle only; call [`fill_lower_from_upper`]
/// before reading the result.
pub fn add_outer_upper(acc: &mut CMatrix, x: &CVector) {
    let n = x.len();
    let xs = x.as_slice();
    let data = acc.as_mut_slice();
    for j in 0..n {
        let c = xs[j].conj();
        let col = &mut data[j * n..j * n + j + 1];
        for (a, xi) in col.iter_mut().zip(&xs[..=j]) {
            *a += xi * c;
        }
    }
}

pub fn fill_lower_from_upper(a: &mut CMatrix) {
    let n = a.nrows();
    for j in 0..n {
        a[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            a[(i, j)] = a[(j, i)].conj();
        }
    }
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMatrix, what: &str) -> Result<CMatrix> {
    let fail = || Error::Singular(format!("{what} is not positive definite"));
    let chol = a.clone().cholesky().ok_or_else(fail)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if !ok {
        return Err(fail());
    }
    Ok(chol.inverse())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn real_diag(a: &CMatrix) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, i)].re).collect()
}

pub fn max_abs_imag_diag(a: &CMatrix) -> f64 {
    (0..a.nrows())
        .map(|i| a[(i, i)].im.abs())
        .fold(0.0, f64::max)
}

pub fn as_complex(d: &DVector<f64>) -> CVector {
    d.map(|v| Complex64::new(v, 0.0))
}
