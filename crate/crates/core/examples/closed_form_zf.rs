//! Closed-form ZF SINR, and the estimated-covariance error term Γ̃ against
//! one built from sampled Wishart inverses.

use cellfree::linalg::rel_frobenius;
use cellfree::pilots::{assign_pilots, PilotPolicy};
use cellfree::rng;
use cellfree::scenario::{LargeScaleProfile, SystemConfig};
use cellfree::theory::{zf_gamma_tilde_sampled, zf_sinr_closed, CovarianceKnowledge};

fn main() -> cellfree::Result<()> {
    let profile =
        LargeScaleProfile::from_gains(&[vec![1.0, 0.3], vec![0.2, 0.9], vec![0.5, 0.5]], 16)?;
    let plan = assign_pilots(3, 3, PilotPolicy::Orthogonal)?;
    let config = SystemConfig {
        num_aps: 2,
        antennas_per_ap: 16,
        num_users: 3,
        num_pilots: 3,
        pilot_len: 3,
        tx_power: 10.0,
        noise_power: 1.0,
        n_sigma: 256,
        n_lambda: 400,
        ..SystemConfig::default()
    };
    for knowledge in [CovarianceKnowledge::Perfect, CovarianceKnowledge::Estimated] {
        let form = zf_sinr_closed(&profile, &plan, &config, knowledge)?;
        println!("{knowledge:?}: gamma {:?}", form.gamma);
        if knowledge == CovarianceKnowledge::Estimated {
            let sampled =
                zf_gamma_tilde_sampled(&profile, &plan, &config, 500, &mut rng::stream(&[7]))?;
            println!(
                "  Gamma~ closed form vs sampled: rel error {:.4}",
                rel_frobenius(&form.gamma_tilde_matrix(), &sampled)
            );
        }
    }
    Ok(())
}
