//! Estimates the received and per-user covariances from pilot blocks and
//! shows how the error in Λ̂ shrinks with the number of shifted pairs.

use cellfree::covariance::{estimate_window, perfect_received_covariance, WindowPlan};
use cellfree::linalg::{diag_matrix, rel_frobenius};
use cellfree::pilots::{assign_pilots, phase_schedule, PilotPolicy};
use cellfree::rng;
use cellfree::scenario::{LargeScaleProfile, WindowLayout};

fn main() -> cellfree::Result<()> {
    // Two users sharing one pilot, three APs with two antennas each.
    let profile = LargeScaleProfile::from_gains(&[vec![1.0, 0.3, 0.05], vec![0.1, 0.6, 1.2]], 2)?;
    let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin)?;
    let (rho, sigma2) = (10.0, 1.0);
    let sigma_true = diag_matrix(&perfect_received_covariance(&profile, &[0, 1], rho, sigma2));

    println!(
        "{:>8} {:>8} {:>10} {:>10} {:>10}",
        "N_Sigma", "N_Lambda", "err Sigma", "err L0", "err L1"
    );
    for (n_sigma, n_lambda) in [(12, 25), (50, 100), (200, 400), (800, 1600)] {
        let window = WindowPlan {
            n_sigma,
            n_lambda,
            layout: WindowLayout::Disjoint,
            project_lambda: true,
        };
        let sched = phase_schedule(2, window.shifted_pairs(), &mut rng::stream(&[1, 0]));
        let set = estimate_window(
            &profile,
            &plan,
            &sched,
            rho,
            sigma2,
            &window,
            &mut rng::stream(&[1, 1]),
            &mut rng::stream(&[1, 2]),
        )?;
        let err = |k: usize| {
            rel_frobenius(
                &set.lambda_per_user[k],
                &diag_matrix(&profile.lambda_diag(k)),
            )
        };
        println!(
            "{n_sigma:>8} {n_lambda:>8} {:>10.4} {:>10.4} {:>10.4}",
            rel_frobenius(set.sigma(0).unwrap(), &sigma_true),
            err(0),
            err(1)
        );
    }
    Ok(())
}
