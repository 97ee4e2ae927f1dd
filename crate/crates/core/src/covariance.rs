//! Received-signal and per-user covariance: the perfect oracle, the sample
//! covariance of plain-pilot blocks, and the individual covariance built by
//! cross-correlating plain and derotated shifted observations.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::draw_channel;
use crate::error::{Error, Result};
use crate::linalg::{self, add_outer, add_outer_upper, fill_lower_from_upper, CMatrix, CVector};
use crate::pilots::{receive_pilot_into, PhaseSchedule, PilotMode, PilotPlan};
use crate::scenario::{LargeScaleProfile, SystemConfig, WindowLayout};

/// Σ_p = ρ(Σ_{i∈U_p} Λ_i + (σ²/ρ) I), returned as its diagonal.
pub fn perfect_received_covariance(
    profile: &LargeScaleProfile,
    group: &[usize],
    rho: f64,
    sigma2: f64,
) -> Vec<f64> {
    let mut d = vec![sigma2; profile.mn()];
    for &i in group {
        for (dj, lj) in d.iter_mut().zip(profile.lambda_diag(i)) {
            *dj += rho * lj;
        }
    }
    d
}

/// Σ̂ = (1/N) Σ_n y[n] y[n]ᴴ.
pub fn sample_covariance(observations: &[CVector]) -> Result<CMatrix> {
    let first = observations
        .first()
        .ok_or_else(|| Error::Precondition("sample covariance of an empty list".into()))?;
    let mut acc = SampleCovariance::new(first.len());
    for y in observations {
        acc.push(y);
    }
    acc.finish()
}

/// Streaming form of [`sample_covariance`].
#[derive(Debug, Clone)]
pub struct SampleCovariance {
    acc: CMatrix,
    count: usize,
}

impl SampleCovariance {
    pub fn new(dim: usize) -> Self {
        Self {
            acc: CMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn push(&mut self, y: &CVector) {
        add_outer_upper(&mut self.acc, y);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<CMatrix> {
        if self.count == 0 {
            return Err(Error::Precondition(
                "sample covariance of an empty list".into(),
            ));
        }
        fill_lower_from_upper(&mut self.acc);
        Ok(self.acc.unscale(self.count as f64))
    }
}

/// Λ̂ = psd_project((1/(2Nρ)) Σ_n (h1 h2ᴴ + h2 h1ᴴ)), where h1 is the plain
/// observation and h2 the derotated shifted observation of pair n.
pub fn individual_covariance(pairs: &[(CVector, CVector)], rho: f64) -> Result<CMatrix> {
    let (h1, _) = pairs
        .first()
        .ok_or_else(|| Error::Precondition("individual covariance of an empty list".into()))?;
    let mut acc = IndividualCovariance::new(h1.len());
    for (h1, h2) in pairs {
        acc.push(h1, h2);
    }
    acc.finish(rho)
}

/// Streaming form of [`individual_covariance`].
#[derive(Debug, Clone)]
pub struct IndividualCovariance {
    /// Σ_n h1 h2ᴴ; the Hermitian completion is added in `finish`.
    acc: CMatrix,
    count: usize,
}

impl IndividualCovariance {
    pub fn new(dim: usize) -> Self {
        Self {
            acc: CMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn push(&mut self, h1: &CVector, h2: &CVector) {
        add_outer(&mut self.acc, h1, h2);
        self.count += 1;
    }

    /// Adds `h1 (e^{−jθ} s)ᴴ = e^{jθ} h1 sᴴ` without materializing the
    /// derotated vector.
    pub fn push_rotated(&mut self, h1: &CVector, shifted: &CVector, theta: f64) {
        let c = Complex64::from_polar(1.0, theta);
        let n = h1.len();
        let xs = h1.as_slice();
        let data = self.acc.as_mut_slice();
        for (j, sj) in shifted.iter().enumerate() {
            let w = c * sj.conj();
            let col = &mut data[j * n..(j + 1) * n];
            for (a, xi) in col.iter_mut().zip(xs) {
                *a += xi * w;
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Raw Hermitian estimate before projection.
    pub fn raw(&self, rho: f64) -> Result<CMatrix> {
        if self.count == 0 {
            return Err(Error::Precondition(
                "individual covariance of an empty list".into(),
            ));
        }
        if !(rho > 0.0) {
            return Err(Error::Precondition(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let scale = 1.0 / (2.0 * self.count as f64 * rho);
        Ok((&self.acc + self.acc.adjoint()).scale(scale))
    }

    pub fn finish(self, rho: f64) -> Result<CMatrix> {
        Ok(psd_project(&self.raw(rho)?))
    }
}

/// Frobenius-nearest Hermitian PSD matrix: eigen-clip the Hermitian part.
pub fn psd_project(a: &CMatrix) -> CMatrix {
    let h = linalg::hermitian_part(a);
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return h;
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, &v) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.max(0.0));
    }
    linalg::hermitian_part(&(scaled * u.adjoint()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    Perfect,
    Estimated,
}

impl CovMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Perfect => "perfect",
            Self::Estimated => "estimated",
        }
    }
}

/// Covariances used by the channel estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    /// Σ̂_p (or Σ_p); `None` for pilots nobody uses.
    pub sigma_per_pilot: Vec<Option<CMatrix>>,
    /// Λ̂_k (or Λ_k).
    pub lambda_per_user: Vec<CMatrix>,
    pub provenance: CovMode,
    pub n_sigma: usize,
    pub n_lambda: usize,
}

impl CovarianceSet {
    /// Oracle covariances. `n_sigma`/`n_lambda` are recorded as zero.
    pub fn perfect(profile: &LargeScaleProfile, plan: &PilotPlan, rho: f64, sigma2: f64) -> Self {
        let sigma_per_pilot = plan
            .groups
            .iter()
            .map(|g| {
                (!g.is_empty()).then(|| {
                    linalg::diag_matrix(&perfect_received_covariance(profile, g, rho, sigma2))
                })
            })
            .collect();
        let lambda_per_user = (0..plan.num_users())
            .map(|k| linalg::diag_matrix(&profile.lambda_diag(k)))
            .collect();
        Self {
            sigma_per_pilot,
            lambda_per_user,
            provenance: CovMode::Perfect,
            n_sigma: 0,
            n_lambda: 0,
        }
    }

    pub fn sigma(&self, pilot: usize) -> Option<&CMatrix> {
        self.sigma_per_pilot[pilot].as_ref()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CovarianceDump::from(self)).expect("covariance dump serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        let dump: CovarianceDump = serde_json::from_str(s)?;
        Ok(dump.into())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })
    }
}

/// Block budget and layout of one stationarity window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPlan {
    pub n_sigma: usize,
    pub n_lambda: usize,
    pub layout: WindowLayout,
    pub project_lambda: bool,
}

impl WindowPlan {
    pub fn from_config(config: &SystemConfig) -> Self {
        Self {
            n_sigma: config.n_sigma,
            n_lambda: config.n_lambda,
            layout: config.window_layout,
            project_lambda: config.project_lambda,
        }
    }

    /// Block pairs that need a phase per user.
    pub fn shifted_pairs(&self) -> usize {
        match self.layout {
            WindowLayout::Disjoint => self.n_lambda,
            WindowLayout::Shared => self.n_sigma.max(self.n_lambda),
        }
    }
}

/// Estimates Σ̂_p and Λ̂_k from one stationarity window.
///
/// Each block pair draws a fresh channel, then the plain observation of every
/// used pilot, then the shifted one. Λ̂ uses the first `n_lambda` pairs drawn
/// from `lambda_rng`. With [`WindowLayout::Shared`] Σ̂ uses the plain blocks
/// of the first `n_sigma` pairs from the same stream and `sigma_rng` is not
/// touched; with [`WindowLayout::Disjoint`] Σ̂ uses `n_sigma` extra plain
/// blocks drawn from `sigma_rng`. Every pair consumes the same number of
/// draws, so windows of different lengths share their prefix.
pub fn estimate_window<R: Rng + ?Sized>(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    schedule: &PhaseSchedule,
    rho: f64,
    sigma2: f64,
    window: &WindowPlan,
    lambda_rng: &mut R,
    sigma_rng: &mut R,
) -> Result<CovarianceSet> {
    let WindowPlan {
        n_sigma,
        n_lambda,
        layout,
        project_lambda,
    } = *window;
    if n_sigma == 0 || n_lambda == 0 {
        return Err(Error::Precondition(
            "window needs n_sigma ≥ 1 and n_lambda ≥ 1".into(),
        ));
    }
    let n_pairs = window.shifted_pairs();
    if schedule.num_pairs() < n_pairs || schedule.num_users() != plan.num_users() {
        return Err(Error::Precondition(
            "phase schedule does not cover the window".into(),
        ));
    }
    let mn = profile.mn();
    let used: Vec<usize> = (0..plan.num_pilots())
        .filter(|&p| !plan.groups[p].is_empty())
        .collect();
    let mut plain = vec![CVector::zeros(mn); plan.num_pilots()];
    let mut shifted = vec![CVector::zeros(mn); plan.num_pilots()];
    let mut sigma_acc: Vec<Option<SampleCovariance>> = (0..plan.num_pilots())
        .map(|p| (!plan.groups[p].is_empty()).then(|| SampleCovariance::new(mn)))
        .collect();
    let mut lambda_acc: Vec<IndividualCovariance> = (0..plan.num_users())
        .map(|_| IndividualCovariance::new(mn))
        .collect();
    let mut phases = Vec::with_capacity(plan.num_users());
    let shared = layout == WindowLayout::Shared;

    for n in 0..n_pairs {
        let channel = draw_channel(profile, n as u64, lambda_rng);
        for &p in &used {
            receive_pilot_into(
                &mut plain[p],
                &channel,
                &plan.groups[p],
                PilotMode::Plain,
                rho,
                sigma2,
                lambda_rng,
            );
        }
        for &p in &used {
            let group = &plan.groups[p];
            phases.clear();
            phases.extend(group.iter().map(|&i| schedule.theta(i, n)));
            receive_pilot_into(
                &mut shifted[p],
                &channel,
                group,
                PilotMode::Shifted(&phases),
                rho,
                sigma2,
                lambda_rng,
            );
        }
        if shared && n < n_sigma {
            for &p in &used {
                sigma_acc[p].as_mut().expect("used pilot").push(&plain[p]);
            }
        }
        if n < n_lambda {
            for (k, acc) in lambda_acc.iter_mut().enumerate() {
                let p = plan.pilot_of(k);
                acc.push_rotated(&plain[p], &shifted[p], schedule.theta(k, n));
            }
        }
    }
    if !shared {
        for n in 0..n_sigma {
            let channel = draw_channel(profile, (n_lambda + n) as u64, sigma_rng);
            for &p in &used {
                receive_pilot_into(
                    &mut plain[p],
                    &channel,
                    &plan.groups[p],
                    PilotMode::Plain,
                    rho,
                    sigma2,
                    sigma_rng,
                );
                sigma_acc[p].as_mut().expect("used pilot").push(&plain[p]);
            }
        }
    }

    let sigma_per_pilot = sigma_acc
        .into_iter()
        .map(|a| a.map(SampleCovariance::finish).transpose())
        .collect::<Result<_>>()?;
    let lambda_per_user = lambda_acc
        .into_iter()
        .map(|a| {
            if project_lambda {
                a.finish(rho)
            } else {
                a.raw(rho)
            }
        })
        .collect::<Result<_>>()?;
    Ok(CovarianceSet {
        sigma_per_pilot,
        lambda_per_user,
        provenance: CovMode::Estimated,
        n_sigma,
        n_lambda,
    })
}

/// Row-major complex matrix as `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixDump {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixDump {
    fn from(m: &CMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl From<MatrixDump> for CMatrix {
    fn from(d: MatrixDump) -> Self {
        CMatrix::from_fn(d.rows, d.cols, |i, j| {
            let [re, im] = d.data[i * d.cols + j];
            Complex64::new(re, im)
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CovarianceDump {
    provenance: CovMode,
    n_sigma: usize,
    n_lambda: usize,
    sigma_per_pilot: Vec<Option<MatrixDump>>,
    lambda_per_user: Vec<MatrixDump>,
}

impl From<&CovarianceSet> for CovarianceDump {
    fn from(c: &CovarianceSet) -> Self {
        Self {
            provenance: c.provenance,
            n_sigma: c.n_sigma,
            n_lambda: c.n_lambda,
            sigma_per_pilot: c
                .sigma_per_pilot
                .iter()
                .map(|s| s.as_ref().map(Into::into))
                .collect(),
            lambda_per_user: c.lambda_per_user.iter().map(Into::into).collect(),
        }
    }
}

impl From<CovarianceDump> for CovarianceSet {
    fn from(d: CovarianceDump) -> Self {
        Self {
            provenance: d.provenance,
            n_sigma: d.n_sigma,
            n_lambda: d.n_lambda,
            sigma_per_pilot: d
                .sigma_per_pilot
                .into_iter()
                .map(|s| s.map(Into::into))
                .collect(),
            lambda_per_user: d.lambda_per_user.into_iter().map(Into::into).collect(),
        }
    }
}
