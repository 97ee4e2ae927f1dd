//! Numerical self-checks run by `cellfree check`: Wishart moments, the
//! rank-one fourth-moment identity, covariance-estimator bias and combiner
//! identities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{estimate_window, perfect_received_covariance, WindowPlan};
use crate::error::Result;
use crate::linalg::{
    complex_normal, complex_normal_vector, diag_matrix, hpd_inverse, rel_frobenius, CMatrix,
};
use crate::linkproc::{combiner, Scheme};
use crate::pilots::{assign_pilots, phase_schedule, PilotPolicy};
use crate::rng::{self, tag};
use crate::scenario::{LargeScaleProfile, WindowLayout};
use crate::theory::{sample_wishart, wishart_moment, WishartMoment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Measured relative error (or residual).
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_owned(),
            error,
            tolerance,
            passed: error.is_finite() && error < tolerance,
        }
    }
}

/// Sample sizes of [`run_checks`].
#[derive(Debug, Clone, Copy)]
pub struct CheckSizes {
    pub wishart_samples: usize,
    pub rank_one_draws: usize,
    pub batches: usize,
}

impl CheckSizes {
    pub fn full() -> Self {
        Self {
            wishart_samples: 20_000,
            rank_one_draws: 100_000,
            batches: 200,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn random_hermitian<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMatrix {
    let a = CMatrix::from_fn(m, m, |_, _| complex_normal(rng, 1.0));
    (&a + a.adjoint()).scale(0.5)
}

/// Monte Carlo E[tr W⁻¹], E[tr W⁻²], E[|tr(W⁻¹A)|²] for W ~ W_m(n, I).
pub fn wishart_checks(n: usize, m: usize, samples: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng::stream(&[seed, tag::CHECK, 1]);
    let a = random_hermitian(m, &mut rng);
    let (mut t1, mut t2, mut q) = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        let inv = hpd_inverse(&sample_wishart(n, m, &mut rng), "Wishart sample")?;
        t1 += inv.trace().re;
        t2 += (&inv * &inv).trace().re;
        q += (&inv * &a).trace().norm_sqr();
    }
    let s = samples as f64;
    Ok(vec![
        CheckOutcome::new(
            "wishart E[tr W^-1]",
            rel(t1 / s, wishart_moment(WishartMoment::TrInv, n, m)?),
            0.02,
        ),
        CheckOutcome::new(
            "wishart E[tr W^-2]",
            rel(t2 / s, wishart_moment(WishartMoment::TrInvSq, n, m)?),
            0.02,
        ),
        CheckOutcome::new(
            "wishart E[|tr(W^-1 A)|^2]",
            rel(q / s, wishart_moment(WishartMoment::QuadForm(&a), n, m)?),
            0.02,
        ),
    ])
}

/// E[g gᴴ A g gᴴ] = A + I tr(A) for g ~ CN(0, I).
pub fn rank_one_check(m: usize, draws: usize, seed: u64) -> CheckOutcome {
    let mut rng = rng::stream(&[seed, tag::CHECK, 2]);
    let a = random_hermitian(m, &mut rng);
    let mut acc = CMatrix::zeros(m, m);
    for _ in 0..draws {
        let g = complex_normal_vector(&mut rng, m, 1.0);
        let s = (g.adjoint() * &a * &g)[(0, 0)];
        acc += &g * g.adjoint() * s;
    }
    acc.unscale_mut(draws as f64);
    let expected = &a + CMatrix::identity(m, m) * a.trace();
    CheckOutcome::new(
        "rank-one fourth moment",
        rel_frobenius(&acc, &expected),
        0.03,
    )
}

/// Mean Σ̂ and Λ̂ over independent windows against the oracles, for two
/// co-pilot users over MN = 8 antennas.
pub fn estimator_checks(batches: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let profile =
        LargeScaleProfile::from_gains(&[vec![1.0, 0.5, 0.2, 0.1], vec![0.2, 0.1, 1.5, 0.7]], 2)?;
    let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin)?;
    let (rho, sigma2) = (10.0, 1.0);
    let mn = profile.mn();
    let window = WindowPlan {
        n_sigma: 500,
        n_lambda: 400,
        layout: WindowLayout::Disjoint,
        project_lambda: true,
    };
    let mut sigma = CMatrix::zeros(mn, mn);
    let mut lambda = [CMatrix::zeros(mn, mn), CMatrix::zeros(mn, mn)];
    for b in 0..batches as u64 {
        let sched = phase_schedule(
            2,
            window.shifted_pairs(),
            &mut rng::stream(&[seed, tag::CHECK, 3, b, 0]),
        );
        let set = estimate_window(
            &profile,
            &plan,
            &sched,
            rho,
            sigma2,
            &window,
            &mut rng::stream(&[seed, tag::CHECK, 3, b, 1]),
            &mut rng::stream(&[seed, tag::CHECK, 3, b, 2]),
        )?;
        sigma += set.sigma(0).expect("pilot 0 is used");
        for (acc, l) in lambda.iter_mut().zip(&set.lambda_per_user) {
            *acc += l;
        }
    }
    let s = 1.0 / batches as f64;
    let sigma_true = diag_matrix(&perfect_received_covariance(&profile, &[0, 1], rho, sigma2));
    let mut out = vec![CheckOutcome::new(
        "mean sample covariance",
        rel_frobenius(&sigma.scale(s), &sigma_true),
        0.05,
    )];
    for (k, acc) in lambda.iter().enumerate() {
        let truth = diag_matrix(&profile.lambda_diag(k));
        out.push(CheckOutcome::new(
            &format!("mean individual covariance, user {k}"),
            rel_frobenius(&acc.scale(s), &truth),
            0.10,
        ));
    }
    Ok(out)
}

/// MRC returns Ĝ; ZF satisfies Ĝᴴ Z = I.
pub fn combiner_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = rng::stream(&[seed, tag::CHECK, 4]);
    let g = CMatrix::from_fn(16, 4, |_, _| complex_normal(&mut rng, 1.0));
    let mrc = combiner(&g, Scheme::Mrc)?;
    let zf = combiner(&g, Scheme::Zf)?;
    let eye = CMatrix::identity(4, 4);
    let resid = (g.adjoint() * zf - &eye)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Ok(vec![
        CheckOutcome::new(
            "MRC combiner equals estimate",
            rel_frobenius(&mrc, &g),
            1e-15,
        ),
        CheckOutcome::new("ZF combiner inverts estimate", resid, 1e-10),
    ])
}

pub fn run_checks(sizes: CheckSizes, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = wishart_checks(64, 8, sizes.wishart_samples, seed)?;
    out.push(rank_one_check(4, sizes.rank_one_draws, seed));
    out.extend(estimator_checks(sizes.batches, seed)?);
    out.extend(combiner_checks(seed)?);
    Ok(out)
}
