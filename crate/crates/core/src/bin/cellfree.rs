use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cellfree::harness::{emit_report, run_sweep, run_theory, ExperimentSpec, Format, SinrReport};
use cellfree::validation::{run_checks, CheckSizes};

#[derive(Parser)]
#[command(
    name = "cellfree",
    version,
    about = "Cell-free massive MIMO uplink with estimated covariances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo at the base point of the experiment
    Simulate,
    /// Closed forms over the sweep
    Theory,
    /// Full sweep, simulated and (if requested) theoretical rows
    Sweep,
    /// Numerical self-checks
    Check,
}

#[derive(Args)]
struct Common {
    /// JSON experiment spec; a small built-in sweep is used otherwise
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the spec
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report files
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    format: Format,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Monte Carlo trials, overriding the spec
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Large preset (M=5, N=50, K=5, N_Σ ∈ {1000, 3000}); takes hours
    #[arg(long, global = true)]
    full_scale: bool,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: cellfree::Error| e.to_string())
}

fn specs(common: &Common) -> cellfree::Result<Vec<ExperimentSpec>> {
    let mut specs = if common.full_scale {
        ExperimentSpec::full_scale_set()
    } else if let Some(path) = &common.config {
        vec![ExperimentSpec::load(path)?]
    } else {
        vec![ExperimentSpec::desk()]
    };
    for spec in &mut specs {
        if let Some(seed) = common.seed {
            spec.base.master_seed = seed;
        }
        if let Some(trials) = common.trials {
            spec.trials = trials;
        }
        spec.validate()?;
    }
    Ok(specs)
}

fn write(report: &SinrReport, dir: &Path, stem: &str, format: Format) -> cellfree::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| cellfree::Error::Io {
        path: dir.to_owned(),
        source,
    })?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    emit_report(report, &path, format)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> cellfree::Result<bool> {
    let c = &cli.common;
    if let Command::Check = cli.command {
        let seed = c.seed.unwrap_or(1);
        let outcomes = run_checks(CheckSizes::full(), seed)?;
        let mut ok = true;
        for o in &outcomes {
            println!(
                "{} {:<40} error {:.3e} (tolerance {:.0e})",
                if o.passed { "PASS" } else { "FAIL" },
                o.name,
                o.error,
                o.tolerance
            );
            ok &= o.passed;
        }
        if let Some(dir) = &c.out {
            std::fs::create_dir_all(dir).map_err(|source| cellfree::Error::Io {
                path: dir.to_owned(),
                source,
            })?;
            let path = dir.join("check.json");
            let text = serde_json::to_string_pretty(&outcomes).expect("outcomes serialize");
            std::fs::write(&path, text).map_err(|source| cellfree::Error::Io { path, source })?;
        }
        return Ok(ok);
    }

    let specs = specs(c)?;
    let multi = specs.len() > 1;
    let mut complete = true;
    for spec in &specs {
        let (stem, report) = match cli.command {
            Command::Simulate => {
                let mut one = spec.single_point();
                one.include_theory = false;
                ("simulate", run_sweep(&one)?)
            }
            Command::Theory => ("theory", run_theory(spec)?),
            Command::Sweep => ("sweep", run_sweep(spec)?),
            Command::Check => unreachable!(),
        };
        print!("{report}");
        for s in &report.skipped {
            eprintln!(
                "skipped {}={} {} {} {}: {}",
                report.sweep_variable.as_str(),
                s.sweep_value,
                s.scheme.as_str(),
                s.cov_mode.as_str(),
                s.source.as_str(),
                s.reason
            );
        }
        complete &= report.skipped.is_empty();
        if let Some(dir) = &c.out {
            let stem = if multi {
                format!("{stem}_nsigma{}", spec.base.n_sigma)
            } else {
                stem.to_owned()
            };
            write(&report, dir, &stem, c.format)?;
        }
    }
    Ok(complete)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
