//! Draws one random layout and prints the large-scale gains and the
//! transmit power that puts the median user at 10 dB.

use cellfree::rng::{self, tag};
use cellfree::scenario::{build_profile, SystemConfig};

fn main() {
    let config = SystemConfig::default();
    let profile = build_profile(
        &config,
        &mut rng::stream(&[config.master_seed, tag::GEOMETRY, 0]),
    );
    println!("APs at:");
    for (m, p) in profile.ap_positions.iter().enumerate() {
        println!("  AP{m}: ({:7.1}, {:7.1})", p.x, p.y);
    }
    println!("gains in dB (rows are users):");
    for k in 0..profile.num_users() {
        let row: Vec<String> = profile
            .user_gains(k)
            .iter()
            .map(|g| format!("{:7.1}", 10.0 * g.log10()))
            .collect();
        println!("  user {k}: {}", row.join(" "));
    }
    let rho = profile.tx_power_for_median_snr(10.0, config.noise_power);
    println!("tx power for 10 dB median SNR: {rho:.3e}");
}
