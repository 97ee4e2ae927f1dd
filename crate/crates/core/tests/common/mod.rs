//! Reference implementations for the integration tests. They use their own
//! generator, sampler and solvers rather than the library's.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<Complex64>;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// CN(0, 1)
pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| cn(rng))
}

/// Z Zᴴ with Z an m×n matrix of CN(0, 1) entries.
pub fn wishart<R: Rng>(n: usize, m: usize, rng: &mut R) -> Mat {
    let z = gaussian(m, n, rng);
    &z * z.adjoint()
}

/// LU inverse.
pub fn inverse(a: &Mat) -> Mat {
    a.clone().try_inverse().expect("invertible")
}

pub fn random_hermitian<R: Rng>(m: usize, rng: &mut R) -> Mat {
    let a = gaussian(m, m, rng);
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn diag(d: &[f64]) -> Mat {
    Mat::from_fn(d.len(), d.len(), |i, j| {
        if i == j {
            Complex64::new(d[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn rel_fro(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Exact UatF SINR of MRC with MMSE estimates from known diagonal
/// covariances. `lambda[k]` is the diagonal of Λ_k, `pilot[k]` user k's pilot.
pub fn mrc_perfect_uatf(lambda: &[Vec<f64>], pilot: &[usize], rho: f64, sigma2: f64) -> Vec<f64> {
    let mn = lambda[0].len();
    let k_users = lambda.len();
    (0..k_users)
        .map(|k| {
            let group: Vec<usize> = (0..k_users).filter(|&i| pilot[i] == pilot[k]).collect();
            let sig: Vec<f64> = (0..mn)
                .map(|a| sigma2 + rho * group.iter().map(|&i| lambda[i][a]).sum::<f64>())
                .collect();
            let d: Vec<f64> = (0..mn)
                .map(|a| rho.sqrt() * lambda[k][a] / sig[a])
                .collect();
            let spread = |i: usize| {
                (0..mn)
                    .map(|a| d[a] * d[a] * lambda[i][a] * sig[a])
                    .sum::<f64>()
            };
            let coherent =
                |i: usize| rho * (0..mn).map(|a| d[a] * lambda[i][a]).sum::<f64>().powi(2);
            let total: f64 = (0..k_users).map(spread).sum::<f64>()
                + group.iter().map(|&i| coherent(i)).sum::<f64>();
            let noise: f64 = (0..mn).map(|a| d[a] * d[a] * sig[a]).sum();
            let desired = coherent(k);
            rho * desired / (rho * total - rho * desired + sigma2 * noise)
        })
        .collect()
}
