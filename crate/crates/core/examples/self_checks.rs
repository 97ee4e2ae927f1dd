//! Runs the numerical self-checks.

use cellfree::validation::{run_checks, CheckSizes};

fn main() -> cellfree::Result<()> {
    let sizes = CheckSizes::full();
    for c in run_checks(sizes, 11)? {
        println!(
            "{:4} {:<40} {:.3e} < {:.0e}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.error,
            c.tolerance
        );
    }
    Ok(())
}
