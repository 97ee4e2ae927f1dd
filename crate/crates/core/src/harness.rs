//! Experiment orchestration: seeded sweeps over one system parameter,
//! Monte Carlo and closed-form rows, geometry averaging and report files.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::covariance::CovMode;
use crate::error::{Error, Result};
use crate::linkproc::{achievable_rate, simulate_uatf, LinkSetup, Scheme, TrialKeys};
use crate::pilots::{assign_pilots, PilotPlan, PilotPolicy};
use crate::rng::{self, tag};
use crate::scenario::{build_profile, LargeScaleProfile, SystemConfig, WindowLayout};
use crate::theory::{closed_form_gammas, CovarianceKnowledge};

/// CSV header of [`emit_report`].
pub const CSV_HEADER: [&str; 10] = [
    "sweep_value",
    "scheme",
    "cov_mode",
    "source",
    "user",
    "gamma",
    "rate",
    "sum_rate",
    "stderr",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NLambda,
    NSigma,
    NumPilots,
    /// Median strongest-AP SNR in dB; sets ρ per drop.
    SnrDb,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::NLambda => "n_lambda",
            Self::NSigma => "n_sigma",
            Self::NumPilots => "num_pilots",
            Self::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Simulated,
    Theoretical,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Simulated => "simulated",
            Self::Theoretical => "theoretical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!(
                "unknown format `{s}` (expected csv or json)"
            ))),
        }
    }
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Mrc, Scheme::Zf]
}

fn default_cov_modes() -> Vec<CovMode> {
    vec![CovMode::Perfect, CovMode::Estimated]
}

fn default_trials() -> usize {
    1000
}

fn default_drops() -> usize {
    1
}

fn default_snr() -> Option<f64> {
    Some(10.0)
}

/// A sweep of one parameter around a base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_cov_modes")]
    pub cov_modes: Vec<CovMode>,
    #[serde(default)]
    pub include_theory: bool,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Independent geometries averaged per row.
    #[serde(default = "default_drops")]
    pub num_drops: usize,
    /// Median SNR in dB used to pick ρ for each drop; `null` keeps `base.tx_power`.
    #[serde(default = "default_snr")]
    pub median_snr_db: Option<f64>,
    /// Pilot assignment; orthogonal when P ≥ K and round-robin otherwise if unset.
    #[serde(default)]
    pub pilot_policy: Option<PilotPolicy>,
}

impl ExperimentSpec {
    /// Small sweep over N_Λ that runs in seconds.
    pub fn desk() -> Self {
        let base = SystemConfig {
            num_aps: 4,
            antennas_per_ap: 2,
            num_users: 4,
            num_pilots: 4,
            pilot_len: 4,
            n_sigma: 32,
            n_lambda: 100,
            ..SystemConfig::default()
        };
        Self {
            base,
            sweep_variable: SweepVariable::NLambda,
            sweep_values: vec![25.0, 50.0, 100.0, 200.0, 400.0],
            schemes: default_schemes(),
            cov_modes: default_cov_modes(),
            include_theory: true,
            trials: 2000,
            num_drops: 1,
            median_snr_db: Some(10.0),
            pilot_policy: None,
        }
    }

    /// Large setting (M=5, N=50, K=5) with the given N_Σ. Expect
    /// hours of runtime for the estimated-covariance rows.
    pub fn full_scale(n_sigma: usize) -> Self {
        let base = SystemConfig {
            n_sigma,
            n_lambda: 1000,
            window_layout: WindowLayout::Disjoint,
            ..SystemConfig::default()
        };
        Self {
            base,
            sweep_variable: SweepVariable::NLambda,
            sweep_values: vec![100.0, 300.0, 1000.0, 3000.0],
            schemes: default_schemes(),
            cov_modes: default_cov_modes(),
            include_theory: true,
            trials: 1000,
            num_drops: 1,
            median_snr_db: Some(10.0),
            pilot_policy: None,
        }
    }

    pub fn full_scale_set() -> Vec<Self> {
        vec![Self::full_scale(1000), Self::full_scale(3000)]
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values is empty".into()));
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep_values must be finite".into()));
        }
        if self.sweep_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "sweep_values must be strictly increasing".into(),
            ));
        }
        if self.sweep_variable != SweepVariable::SnrDb {
            if let Some(v) = self
                .sweep_values
                .iter()
                .find(|v| !(**v >= 1.0 && v.fract() == 0.0))
            {
                return Err(Error::Config(format!(
                    "{} takes positive integers, got {v}",
                    self.sweep_variable.as_str()
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.num_drops == 0 {
            return Err(Error::Config("num_drops must be at least 1".into()));
        }
        if self.schemes.is_empty() || self.cov_modes.is_empty() {
            return Err(Error::Config(
                "schemes and cov_modes must be nonempty".into(),
            ));
        }
        if has_duplicates(&self.schemes) || has_duplicates(&self.cov_modes) {
            return Err(Error::Config(
                "schemes and cov_modes must not repeat".into(),
            ));
        }
        if let Some(snr) = self.median_snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("median_snr_db must be finite".into()));
            }
        }
        Ok(())
    }

    /// Base value of the swept parameter, for single-point runs.
    pub fn base_value(&self) -> Option<f64> {
        match self.sweep_variable {
            SweepVariable::NLambda => Some(self.base.n_lambda as f64),
            SweepVariable::NSigma => Some(self.base.n_sigma as f64),
            SweepVariable::NumPilots => Some(self.base.num_pilots as f64),
            SweepVariable::SnrDb => self.median_snr_db,
        }
    }

    /// The same experiment at the base point only.
    pub fn single_point(&self) -> Self {
        let mut spec = self.clone();
        spec.sweep_values = match self.base_value() {
            Some(v) => vec![v],
            None => {
                spec.sweep_variable = SweepVariable::NLambda;
                vec![self.base.n_lambda as f64]
            }
        };
        spec
    }

    /// Configuration at one sweep point, before ρ calibration.
    pub fn point_config(&self, value: f64) -> SystemConfig {
        let mut c = self.base.clone();
        match self.sweep_variable {
            SweepVariable::NLambda => c.n_lambda = value as usize,
            SweepVariable::NSigma => c.n_sigma = value as usize,
            SweepVariable::NumPilots => c.num_pilots = value as usize,
            SweepVariable::SnrDb => {}
        }
        c
    }

    fn point_snr(&self, value: f64) -> Option<f64> {
        match self.sweep_variable {
            SweepVariable::SnrDb => Some(value),
            _ => self.median_snr_db,
        }
    }

    fn plan(&self, config: &SystemConfig) -> Result<PilotPlan> {
        let policy = self
            .pilot_policy
            .unwrap_or_else(|| PilotPolicy::auto(config.num_users, config.num_pilots));
        assign_pilots(config.num_users, config.num_pilots, policy)
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

/// One configuration's per-user results, averaged over drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub cov_mode: CovMode,
    pub source: Source,
    pub gamma: Vec<f64>,
    pub rate: Vec<f64>,
    pub sum_rate: f64,
    /// Monte Carlo standard error of each gamma; zero for closed forms.
    pub std_error: Vec<f64>,
    pub seed: u64,
    /// Seconds spent producing the row (shared by rows computed together).
    pub wall_time: f64,
}

impl ReportRow {
    fn key(&self) -> (f64, Scheme, CovMode, Source) {
        (self.sweep_value, self.scheme, self.cov_mode, self.source)
    }
}

/// A configuration that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub cov_mode: CovMode,
    pub source: Source,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrReport {
    pub sweep_variable: SweepVariable,
    pub master_seed: u64,
    pub trials: usize,
    pub num_drops: usize,
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<SkippedRow>,
}

fn cmp_key(a: &(f64, Scheme, CovMode, Source), b: &(f64, Scheme, CovMode, Source)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

impl SinrReport {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| cmp_key(&a.key(), &b.key()));
        self.skipped.sort_by(|a, b| {
            cmp_key(
                &(a.sweep_value, a.scheme, a.cov_mode, a.source),
                &(b.sweep_value, b.scheme, b.cov_mode, b.source),
            )
        });
    }

    pub fn row(
        &self,
        sweep_value: f64,
        scheme: Scheme,
        cov_mode: CovMode,
        source: Source,
    ) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.key() == (sweep_value, scheme, cov_mode, source))
    }

    /// (sweep_value, sum_rate) pairs of one curve, in sweep order.
    pub fn sum_rate_curve(
        &self,
        scheme: Scheme,
        cov_mode: CovMode,
        source: Source,
    ) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.cov_mode == cov_mode && r.source == source)
            .map(|r| (r.sweep_value, r.sum_rate))
            .collect()
    }

    /// Copy with every wall time zeroed, for reproducibility comparisons.
    pub fn without_wall_time(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.wall_time = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Per-drop state shared by all sweep points.
struct Drop {
    index: u64,
    profile: LargeScaleProfile,
}

fn drops(spec: &ExperimentSpec) -> Vec<Drop> {
    (0..spec.num_drops as u64)
        .map(|d| Drop {
            index: d,
            profile: build_profile(
                &spec.base,
                &mut rng::stream(&[spec.base.master_seed, tag::GEOMETRY, d]),
            ),
        })
        .collect()
}

fn calibrated(
    config: &SystemConfig,
    profile: &LargeScaleProfile,
    snr_db: Option<f64>,
) -> SystemConfig {
    let mut c = config.clone();
    if let Some(snr) = snr_db {
        c.tx_power = profile.tx_power_for_median_snr(snr, c.noise_power);
    }
    c
}

/// Drop-averaged per-user values for one (scheme, cov_mode, source).
#[derive(Default)]
struct Averager {
    gamma: Vec<f64>,
    rate: Vec<f64>,
    var: Vec<f64>,
    drops: usize,
}

impl Averager {
    fn push(&mut self, gamma: &[f64], std_error: &[f64], config: &SystemConfig) -> Result<()> {
        if self.drops == 0 {
            self.gamma = vec![0.0; gamma.len()];
            self.rate = vec![0.0; gamma.len()];
            self.var = vec![0.0; gamma.len()];
        }
        for (k, &g) in gamma.iter().enumerate() {
            self.gamma[k] += g;
            self.rate[k] += achievable_rate(g.max(0.0), config.pilot_len, config.coherence_len)?;
            self.var[k] += std_error[k] * std_error[k];
        }
        self.drops += 1;
        Ok(())
    }

    fn finish(self, key: (f64, Scheme, CovMode, Source), seed: u64, wall_time: f64) -> ReportRow {
        let d = self.drops as f64;
        let gamma: Vec<f64> = self.gamma.iter().map(|g| g / d).collect();
        let rate: Vec<f64> = self.rate.iter().map(|r| r / d).collect();
        let std_error = self.var.iter().map(|v| v.sqrt() / d).collect();
        let sum_rate = rate.iter().sum();
        ReportRow {
            sweep_value: key.0,
            scheme: key.1,
            cov_mode: key.2,
            source: key.3,
            gamma,
            rate,
            sum_rate,
            std_error,
            seed,
            wall_time,
        }
    }
}

/// Which row sources to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sources {
    pub simulated: bool,
    pub theoretical: bool,
}

/// Monte Carlo rows plus, when `include_theory` is set, closed-form rows.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SinrReport> {
    run(
        spec,
        Sources {
            simulated: true,
            theoretical: spec.include_theory,
        },
    )
}

/// Closed-form rows only.
pub fn run_theory(spec: &ExperimentSpec) -> Result<SinrReport> {
    run(
        spec,
        Sources {
            simulated: false,
            theoretical: true,
        },
    )
}

pub fn run(spec: &ExperimentSpec, sources: Sources) -> Result<SinrReport> {
    spec.validate()?;
    let seed = spec.base.master_seed;
    let drops = drops(spec);
    let mut report = SinrReport {
        sweep_variable: spec.sweep_variable,
        master_seed: seed,
        trials: spec.trials,
        num_drops: spec.num_drops,
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    let skip = |report: &mut SinrReport, value, cov_mode, source, reason: &Error| {
        for &scheme in &spec.schemes {
            report.skipped.push(SkippedRow {
                sweep_value: value,
                scheme,
                cov_mode,
                source,
                reason: reason.to_string(),
            });
        }
    };

    for &value in &spec.sweep_values {
        let config = spec.point_config(value);
        let snr = spec.point_snr(value);
        let plan = match config.validate().and_then(|_| spec.plan(&config)) {
            Ok(p) => p,
            Err(e) => {
                for &mode in &spec.cov_modes {
                    for (on, source) in [
                        (sources.simulated, Source::Simulated),
                        (sources.theoretical, Source::Theoretical),
                    ] {
                        if on {
                            skip(&mut report, value, mode, source, &e);
                        }
                    }
                }
                continue;
            }
        };
        for &mode in &spec.cov_modes {
            if sources.simulated {
                let start = Instant::now();
                match simulate_point(spec, &config, &plan, &drops, snr, mode) {
                    Ok(avgs) => {
                        let t = start.elapsed().as_secs_f64();
                        for (scheme, avg) in spec.schemes.iter().zip(avgs) {
                            report.rows.push(avg.finish(
                                (value, *scheme, mode, Source::Simulated),
                                seed,
                                t,
                            ));
                        }
                    }
                    Err(e) => skip(&mut report, value, mode, Source::Simulated, &e),
                }
            }
            if sources.theoretical {
                for &scheme in &spec.schemes {
                    let start = Instant::now();
                    match theory_point(&config, &plan, &drops, snr, scheme, mode) {
                        Ok(avg) => {
                            let t = start.elapsed().as_secs_f64();
                            report.rows.push(avg.finish(
                                (value, scheme, mode, Source::Theoretical),
                                seed,
                                t,
                            ));
                        }
                        Err(e) => report.skipped.push(SkippedRow {
                            sweep_value: value,
                            scheme,
                            cov_mode: mode,
                            source: Source::Theoretical,
                            reason: e.to_string(),
                        }),
                    }
                }
            }
        }
    }
    report.sort();
    Ok(report)
}

fn simulate_point(
    spec: &ExperimentSpec,
    config: &SystemConfig,
    plan: &PilotPlan,
    drops: &[Drop],
    snr: Option<f64>,
    mode: CovMode,
) -> Result<Vec<Averager>> {
    let mut avgs: Vec<Averager> = spec.schemes.iter().map(|_| Averager::default()).collect();
    for drop in drops {
        let cfg = calibrated(config, &drop.profile, snr);
        let setup = LinkSetup {
            config: &cfg,
            profile: &drop.profile,
            plan,
            keys: TrialKeys::new(cfg.master_seed, drop.index),
        };
        let per_scheme = simulate_uatf(&setup, &spec.schemes, mode, spec.trials)?;
        for (avg, est) in avgs.iter_mut().zip(per_scheme) {
            let gamma: Vec<f64> = est.iter().map(|e| e.gamma).collect();
            let se: Vec<f64> = est.iter().map(|e| e.std_error).collect();
            avg.push(&gamma, &se, &cfg)?;
        }
    }
    Ok(avgs)
}

fn theory_point(
    config: &SystemConfig,
    plan: &PilotPlan,
    drops: &[Drop],
    snr: Option<f64>,
    scheme: Scheme,
    mode: CovMode,
) -> Result<Averager> {
    let knowledge = match mode {
        CovMode::Perfect => CovarianceKnowledge::Perfect,
        CovMode::Estimated => {
            config.validate_for_theory()?;
            CovarianceKnowledge::Estimated
        }
    };
    let mut avg = Averager::default();
    for drop in drops {
        let cfg = calibrated(config, &drop.profile, snr);
        let gamma = closed_form_gammas(&drop.profile, plan, &cfg, scheme, knowledge)?;
        let zeros = vec![0.0; gamma.len()];
        avg.push(&gamma, &zeros, &cfg)?;
    }
    Ok(avg)
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub cov_mode: CovMode,
    pub source: Source,
    pub user: usize,
    pub gamma: f64,
    pub rate: f64,
    pub sum_rate: f64,
    pub stderr: f64,
    pub seed: u64,
}

impl SinrReport {
    pub fn csv_records(&self) -> Vec<CsvRecord> {
        self.rows
            .iter()
            .flat_map(|r| {
                (0..r.gamma.len()).map(move |k| CsvRecord {
                    sweep_value: r.sweep_value,
                    scheme: r.scheme,
                    cov_mode: r.cov_mode,
                    source: r.source,
                    user: k,
                    gamma: r.gamma[k],
                    rate: r.rate[k],
                    sum_rate: r.sum_rate,
                    stderr: r.std_error[k],
                    seed: r.seed,
                })
            })
            .collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes the report to `path`. CSV has one line per user per row under
/// [`CSV_HEADER`]; JSON mirrors [`SinrReport`].
pub fn emit_report(report: &SinrReport, path: &Path, format: Format) -> Result<()> {
    let mut sorted = report.clone();
    sorted.sort();
    match format {
        Format::Json => std::fs::write(path, sorted.to_json()).map_err(io_err(path)),
        Format::Csv => {
            let file = std::fs::File::create(path).map_err(io_err(path))?;
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(file);
            w.write_record(CSV_HEADER)?;
            for rec in sorted.csv_records() {
                w.serialize(rec)?;
            }
            w.flush().map_err(io_err(path))
        }
    }
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected CSV header {header:?}",
            path.display()
        )));
    }
    r.deserialize()
        .map(|rec| rec.map_err(Error::from))
        .collect()
}

pub fn load_report(path: &Path) -> Result<SinrReport> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    SinrReport::from_json(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

impl fmt::Display for SinrReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>12} {:>4} {:>9} {:>11} {:>10}  gamma per user",
            self.sweep_variable.as_str(),
            "rx",
            "cov",
            "source",
            "sum_rate"
        )?;
        for r in &self.rows {
            let gammas: Vec<String> = r.gamma.iter().map(|g| format!("{g:.4}")).collect();
            writeln!(
                f,
                "{:>12} {:>4} {:>9} {:>11} {:>10.4}  {}",
                r.sweep_value,
                r.scheme.as_str(),
                r.cov_mode.as_str(),
                r.source.as_str(),
                r.sum_rate,
                gammas.join(" ")
            )?;
        }
        for s in &self.skipped {
            writeln!(
                f,
                "{:>12} {:>4} {:>9} {:>11} skipped: {}",
                s.sweep_value,
                s.scheme.as_str(),
                s.cov_mode.as_str(),
                s.source.as_str(),
                s.reason
            )?;
        }
        Ok(())
    }
}
