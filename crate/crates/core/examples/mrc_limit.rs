//! Closed-form MRC SINR as N_Σ grows in proportion to MN, next to its
//! large-array limit.

use cellfree::pilots::{assign_pilots, PilotPolicy};
use cellfree::scenario::{LargeScaleProfile, SystemConfig};
use cellfree::theory::{mrc_sinr_closed, mrc_sinr_limit, CovarianceKnowledge};

fn main() -> cellfree::Result<()> {
    let gains = [vec![1.0, 0.4, 0.1], vec![0.2, 1.0, 0.3]];
    let plan = assign_pilots(2, 2, PilotPolicy::Orthogonal)?;
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>10}",
        "N", "closed u0", "limit u0", "closed u1", "limit u1"
    );
    for n in [4, 16, 64, 256] {
        let profile = LargeScaleProfile::from_gains(&gains, n)?;
        let config = SystemConfig {
            num_aps: 3,
            antennas_per_ap: n,
            num_users: 2,
            num_pilots: 2,
            pilot_len: 2,
            tx_power: 1.0,
            noise_power: 1.0,
            n_sigma: 4 * 3 * n,
            n_lambda: 100,
            ..SystemConfig::default()
        };
        let closed =
            mrc_sinr_closed(&profile, &plan, &config, CovarianceKnowledge::Estimated)?.gammas();
        let limit = mrc_sinr_limit(&profile, &plan, &config)?;
        println!(
            "{n:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            closed[0], limit[0].gamma, closed[1], limit[1].gamma
        );
    }
    Ok(())
}
