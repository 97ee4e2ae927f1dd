//! Breaks the closed-form MRC SINR into its terms, with oracle and with
//! estimated covariances.

use cellfree::pilots::{assign_pilots, PilotPolicy};
use cellfree::scenario::{LargeScaleProfile, SystemConfig};
use cellfree::theory::{mrc_sinr_closed, CovarianceKnowledge};

fn main() -> cellfree::Result<()> {
    let profile = LargeScaleProfile::from_gains(
        &[
            vec![1.0, 0.2, 0.05, 0.01],
            vec![0.1, 0.8, 0.3, 0.02],
            vec![0.02, 0.05, 0.9, 0.4],
        ],
        4,
    )?;
    let plan = assign_pilots(3, 2, PilotPolicy::RoundRobin)?;
    let config = SystemConfig {
        num_aps: 4,
        antennas_per_ap: 4,
        num_users: 3,
        num_pilots: 2,
        pilot_len: 2,
        tx_power: 10.0,
        noise_power: 1.0,
        n_sigma: 64,
        n_lambda: 200,
        ..SystemConfig::default()
    };
    for knowledge in [CovarianceKnowledge::Perfect, CovarianceKnowledge::Estimated] {
        println!("{knowledge:?} covariances:");
        let form = mrc_sinr_closed(&profile, &plan, &config, knowledge)?;
        for (k, u) in form.users.iter().enumerate() {
            println!(
                "  user {k}: desired {:.3e}  sum I_EX {:.3e}  sum I_IN {:.3e}  noise {:.3e}  gamma {:.4}",
                u.desired,
                u.interference_ex.iter().sum::<f64>(),
                u.interference_in.iter().sum::<f64>(),
                u.noise_factor * u.noise_power,
                u.gamma
            );
        }
    }
    Ok(())
}
