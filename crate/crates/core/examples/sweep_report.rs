//! Runs the small built-in N_Λ sweep and writes it as CSV and JSON.

use cellfree::harness::{emit_report, run_sweep, ExperimentSpec, Format};

fn main() -> cellfree::Result<()> {
    let mut spec = ExperimentSpec::desk();
    spec.trials = 500;
    let report = run_sweep(&spec)?;
    print!("{report}");
    let dir = std::env::temp_dir().join("cellfree-sweep-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    for format in [Format::Csv, Format::Json] {
        let path = dir.join(format!("sweep.{}", format.extension()));
        emit_report(&report, &path, format)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
