//! Mean per-user rate with orthogonal pilots against half as many pilots
//! reused round-robin.

use cellfree::covariance::CovMode;
use cellfree::harness::{run_sweep, ExperimentSpec, SweepVariable};
use cellfree::linkproc::Scheme;

fn main() -> cellfree::Result<()> {
    let mut spec = ExperimentSpec::desk();
    spec.base.num_users = 6;
    spec.base.pilot_len = 6;
    spec.sweep_variable = SweepVariable::NumPilots;
    spec.sweep_values = vec![3.0, 6.0];
    spec.include_theory = false;
    spec.trials = 1000;
    let report = run_sweep(&spec)?;
    for scheme in [Scheme::Mrc, Scheme::Zf] {
        for mode in [CovMode::Perfect, CovMode::Estimated] {
            let row = report
                .rows
                .iter()
                .filter(|r| r.scheme == scheme && r.cov_mode == mode)
                .map(|r| format!("P={} {:.4}", r.sweep_value, r.sum_rate / 6.0))
                .collect::<Vec<_>>();
            println!(
                "{} {:<9} {}",
                scheme.as_str(),
                mode.as_str(),
                row.join("  ")
            );
        }
    }
    Ok(())
}
