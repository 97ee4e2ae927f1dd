//! Channel-estimation MSE with oracle and with estimated covariances.

use cellfree::covariance::CovMode;
use cellfree::linkproc::{estimation_mse, LinkSetup, TrialKeys};
use cellfree::pilots::{assign_pilots, PilotPolicy};
use cellfree::rng::{self, tag};
use cellfree::scenario::{build_profile, SystemConfig};

fn main() -> cellfree::Result<()> {
    let base = SystemConfig {
        num_aps: 4,
        antennas_per_ap: 4,
        num_users: 4,
        num_pilots: 2,
        pilot_len: 2,
        n_sigma: 64,
        ..SystemConfig::default()
    };
    let profile = build_profile(
        &base,
        &mut rng::stream(&[base.master_seed, tag::GEOMETRY, 0]),
    );
    let plan = assign_pilots(4, 2, PilotPolicy::RoundRobin)?;
    for n_lambda in [25, 100, 400] {
        let config = SystemConfig {
            n_lambda,
            tx_power: profile.tx_power_for_median_snr(10.0, base.noise_power),
            ..base.clone()
        };
        let setup = LinkSetup {
            config: &config,
            profile: &profile,
            plan: &plan,
            keys: TrialKeys::new(1, 0),
        };
        let perfect = estimation_mse(&setup, CovMode::Perfect, 500)?;
        let estimated = estimation_mse(&setup, CovMode::Estimated, 500)?;
        let energy: Vec<f64> = (0..4)
            .map(|k| profile.lambda_diag(k).iter().sum())
            .collect();
        let norm = |v: &[f64]| {
            v.iter()
                .zip(&energy)
                .map(|(e, g)| format!("{:.3}", e / g))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "N_Lambda={n_lambda:>4}  normalized MSE perfect [{}]  estimated [{}]",
            norm(&perfect),
            norm(&estimated)
        );
    }
    Ok(())
}
