//! Shows the estimated-channel Gram matrices concentrating as the number
//! of antennas per AP grows.

use cellfree::linkproc::TrialKeys;
use cellfree::pilots::{assign_pilots, PilotPolicy};
use cellfree::rng::{self, tag};
use cellfree::scenario::{build_profile, SystemConfig};
use cellfree::theory::gram_sequence;

fn main() -> cellfree::Result<()> {
    let mut config = SystemConfig {
        num_aps: 4,
        antennas_per_ap: 2,
        num_users: 6,
        num_pilots: 3,
        pilot_len: 3,
        ..SystemConfig::default()
    };
    let profile = build_profile(
        &config,
        &mut rng::stream(&[config.master_seed, tag::GEOMETRY, 0]),
    );
    config.tx_power = profile.tx_power_for_median_snr(10.0, config.noise_power);
    let plan = assign_pilots(6, 3, PilotPolicy::RoundRobin)?;
    let points = gram_sequence(
        &config,
        &profile,
        &plan,
        &[2, 8, 32, 128],
        200,
        TrialKeys::new(3, 0),
    )?;
    // Physical units; the last two columns are relative to the smallest array.
    let (c0, i0) = (points[0].cross_group, points[0].in_group);
    println!(
        "{:>5} {:>12} {:>12} {:>8} {:>8}",
        "MN", "cross-group", "in-group", "cross/0", "in/0"
    );
    for p in &points {
        println!(
            "{:>5} {:>12.3e} {:>12.3e} {:>8.3} {:>8.3}",
            p.mn,
            p.cross_group,
            p.in_group,
            p.cross_group / c0,
            p.in_group / i0
        );
    }
    Ok(())
}
