//! Monte Carlo UatF SINR for both receivers next to the closed forms.

use cellfree::covariance::CovMode;
use cellfree::linkproc::{simulate_uatf, LinkSetup, Scheme, TrialKeys};
use cellfree::pilots::{assign_pilots, PilotPolicy};
use cellfree::rng::{self, tag};
use cellfree::scenario::{build_profile, SystemConfig};
use cellfree::theory::{closed_form_gammas, CovarianceKnowledge};

fn main() -> cellfree::Result<()> {
    let mut config = SystemConfig {
        num_aps: 4,
        antennas_per_ap: 4,
        num_users: 4,
        num_pilots: 4,
        pilot_len: 4,
        n_sigma: 128,
        n_lambda: 200,
        ..SystemConfig::default()
    };
    let profile = build_profile(
        &config,
        &mut rng::stream(&[config.master_seed, tag::GEOMETRY, 0]),
    );
    config.tx_power = profile.tx_power_for_median_snr(10.0, config.noise_power);
    let plan = assign_pilots(4, 4, PilotPolicy::Orthogonal)?;
    let setup = LinkSetup {
        config: &config,
        profile: &profile,
        plan: &plan,
        keys: TrialKeys::new(config.master_seed, 0),
    };
    let schemes = [Scheme::Mrc, Scheme::Zf];
    for (mode, knowledge) in [
        (CovMode::Perfect, CovarianceKnowledge::Perfect),
        (CovMode::Estimated, CovarianceKnowledge::Estimated),
    ] {
        let sims = simulate_uatf(&setup, &schemes, mode, 5000)?;
        for (scheme, sim) in schemes.iter().zip(sims) {
            let theory = closed_form_gammas(&profile, &plan, &config, *scheme, knowledge)?;
            println!("{} {}:", scheme.as_str(), mode.as_str());
            for (k, (s, t)) in sim.iter().zip(theory).enumerate() {
                println!(
                    "  user {k}: simulated {:.4} ± {:.4}, closed form {t:.4}",
                    s.gamma, s.std_error
                );
            }
        }
    }
    Ok(())
}
