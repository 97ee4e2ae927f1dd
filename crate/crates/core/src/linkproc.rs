//! Channel estimation, combining and the use-and-then-forget (UatF) SINR
//! estimated by Monte Carlo.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, ChannelRealization};
use crate::covariance::{estimate_window, CovMode, CovarianceSet, WindowPlan};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hpd_inverse, pairwise_sum, CMatrix, CVector};
use crate::pilots::{phase_schedule, receive_pilot_into, PilotMode, PilotPlan};
use crate::rng::{self, tag};
use crate::scenario::{LargeScaleProfile, SystemConfig};

/// Largest Gram condition number accepted by the ZF combiner.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;

/// Fraction of Monte Carlo trials that may be skipped before giving up.
pub const MAX_SKIP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "MRC", alias = "mrc")]
    Mrc,
    #[serde(rename = "ZF", alias = "zf")]
    Zf,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mrc => "MRC",
            Self::Zf => "ZF",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrc" => Ok(Self::Mrc),
            "zf" => Ok(Self::Zf),
            _ => Err(Error::Config(format!(
                "unknown scheme `{s}` (expected MRC or ZF)"
            ))),
        }
    }
}

/// ĝ_k = √ρ Λ_k Σ_p⁻¹ y_p with diagonal Λ_k and Σ_p.
pub fn mmse_estimate_perfect(
    y: &CVector,
    lambda: &[f64],
    sigma: &[f64],
    rho: f64,
) -> Result<CVector> {
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Singular(format!(
            "Σ_p has nonpositive diagonal entry {} at {i}",
            sigma[i]
        )));
    }
    let amp = rho.sqrt();
    Ok(CVector::from_fn(y.len(), |i, _| {
        y[i] * (amp * lambda[i] / sigma[i])
    }))
}

/// Ŵ = Λ̂_k Σ̂_p⁻¹ and ĝ = Ŵ y_p.
pub fn mmse_estimate_imperfect(
    y: &CVector,
    lambda_hat: &CMatrix,
    sigma_hat: &CMatrix,
) -> Result<(CVector, CMatrix)> {
    let inv = invert_sigma_hat(sigma_hat)?;
    let w = lambda_hat * inv;
    Ok((&w * y, w))
}

fn invert_sigma_hat(sigma_hat: &CMatrix) -> Result<CMatrix> {
    hpd_inverse(sigma_hat, "sample covariance Σ̂_p").map_err(|_| {
        Error::Singular(format!(
            "sample covariance Σ̂_p is singular; use N_Σ ≥ MN (MN = {})",
            sigma_hat.nrows()
        ))
    })
}

/// Channel estimates of all users in one block.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedChannels {
    /// Column k is ĝ_k.
    pub g_hat: CMatrix,
    /// Ŵ_k, so that ĝ_k = Ŵ_k y_{p(k)}.
    pub w_per_user: Vec<CMatrix>,
    pub covariance_provenance: CovMode,
}

/// Per-user estimator matrices for a fixed set of covariances.
#[derive(Debug, Clone)]
pub struct Estimator {
    w_per_user: Vec<CMatrix>,
    provenance: CovMode,
}

impl Estimator {
    /// Perfect covariances give Ŵ_k = √ρ Λ_k Σ_p⁻¹; estimated ones
    /// Ŵ_k = Λ̂_k Σ̂_p⁻¹.
    pub fn new(covs: &CovarianceSet, plan: &PilotPlan, rho: f64) -> Result<Self> {
        let mut inverses: Vec<Option<CMatrix>> = vec![None; plan.num_pilots()];
        for (p, s) in covs.sigma_per_pilot.iter().enumerate() {
            if let Some(s) = s {
                inverses[p] = Some(invert_sigma_hat(s)?);
            }
        }
        let scale = match covs.provenance {
            CovMode::Perfect => rho.sqrt(),
            CovMode::Estimated => 1.0,
        };
        let w_per_user = (0..plan.num_users())
            .map(|k| {
                let inv = inverses[plan.pilot_of(k)]
                    .as_ref()
                    .expect("every user's pilot has a covariance");
                (&covs.lambda_per_user[k] * inv).scale(scale)
            })
            .collect();
        Ok(Self {
            w_per_user,
            provenance: covs.provenance,
        })
    }

    /// Diagonal fast path for oracle covariances.
    pub fn perfect(profile: &LargeScaleProfile, plan: &PilotPlan, rho: f64, sigma2: f64) -> Self {
        let amp = rho.sqrt();
        let w_per_user = (0..plan.num_users())
            .map(|k| {
                let sigma = crate::covariance::perfect_received_covariance(
                    profile,
                    plan.group_of(k),
                    rho,
                    sigma2,
                );
                let lambda = profile.lambda_diag(k);
                let d: Vec<f64> = lambda
                    .iter()
                    .zip(&sigma)
                    .map(|(l, s)| amp * l / s)
                    .collect();
                crate::linalg::diag_matrix(&d)
            })
            .collect();
        Self {
            w_per_user,
            provenance: CovMode::Perfect,
        }
    }

    pub fn w(&self, user: usize) -> &CMatrix {
        &self.w_per_user[user]
    }

    /// ĝ_k = Ŵ_k y_{p(k)} for every user; `pilots[p]` is y_p.
    pub fn estimate(&self, plan: &PilotPlan, pilots: &[CVector]) -> CMatrix {
        let mn = pilots.iter().map(|y| y.len()).max().unwrap_or(0);
        let mut g_hat = CMatrix::zeros(mn, plan.num_users());
        for (k, w) in self.w_per_user.iter().enumerate() {
            g_hat.set_column(k, &(w * &pilots[plan.pilot_of(k)]));
        }
        g_hat
    }

    pub fn estimate_channels(&self, plan: &PilotPlan, pilots: &[CVector]) -> EstimatedChannels {
        EstimatedChannels {
            g_hat: self.estimate(plan, pilots),
            w_per_user: self.w_per_user.clone(),
            covariance_provenance: self.provenance,
        }
    }
}

/// Combining vectors as columns: MRC returns Ĝ, ZF returns Ĝ(ĜᴴĜ)⁻¹.
pub fn combiner(g_hat: &CMatrix, scheme: Scheme) -> Result<CMatrix> {
    match scheme {
        Scheme::Mrc => Ok(g_hat.clone()),
        Scheme::Zf => {
            let gram = g_hat.adjoint() * g_hat;
            let eig = hermitian_eigenvalues(&gram);
            let (lo, hi) = (eig[0], eig[eig.len() - 1]);
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if !(condition <= ZF_CONDITION_LIMIT) {
                return Err(Error::IllConditioned {
                    condition,
                    threshold: ZF_CONDITION_LIMIT,
                });
            }
            Ok(g_hat * hpd_inverse(&gram, "ZF Gram matrix")?)
        }
    }
}

/// R = (1 − τ/τ_c) log₂(1 + γ).
pub fn achievable_rate(gamma: f64, pilot_symbols: usize, tau_c: usize) -> Result<f64> {
    if pilot_symbols == 0 || pilot_symbols >= tau_c {
        return Err(Error::Precondition(format!(
            "need 0 < pilot_symbols < τ_c (got {pilot_symbols} and {tau_c})"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Precondition(format!(
            "SINR must be nonnegative, got {gamma}"
        )));
    }
    Ok((1.0 - pilot_symbols as f64 / tau_c as f64) * (1.0 + gamma).log2())
}

/// Per-trial UatF moments of one user: Re and Im of w_kᴴg_k,
/// Σ_i |w_kᴴg_i|² and ‖w_k‖².
pub type Moments = [f64; 4];

/// Moments of every user for one realization of combiners `w` and
/// channels `g`.
pub fn trial_moments(w: &CMatrix, g: &CMatrix) -> Vec<Moments> {
    let a = w.adjoint() * g;
    (0..w.ncols())
        .map(|k| {
            let d = a[(k, k)];
            let total: f64 = a.row(k).iter().map(|z| z.norm_sqr()).sum();
            let norm: f64 = w.column(k).iter().map(|z| z.norm_sqr()).sum();
            [d.re, d.im, total, norm]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrEstimate {
    /// ρ |E[w_kᴴ g_k]|²
    pub desired_power: f64,
    /// ρ Σ_i E[|w_kᴴ g_i|²]
    pub total_power: f64,
    /// σ² E[‖w_k‖²]
    pub noise_term: f64,
    pub gamma: f64,
    /// Delta-method standard error of `gamma`; zero with a single trial.
    pub std_error: f64,
    pub trials: usize,
}

/// Collects per-trial moments and turns them into UatF SINRs.
#[derive(Debug, Clone)]
pub struct UatfAccumulator {
    samples: Vec<Vec<Moments>>,
}

impl UatfAccumulator {
    pub fn new(num_users: usize) -> Self {
        Self {
            samples: vec![Vec::new(); num_users],
        }
    }

    pub fn push_moments(&mut self, moments: &[Moments]) {
        for (s, m) in self.samples.iter_mut().zip(moments) {
            s.push(*m);
        }
    }

    pub fn push(&mut self, w: &CMatrix, g: &CMatrix) {
        self.push_moments(&trial_moments(w, g));
    }

    pub fn trials(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn finish(&self, rho: f64, sigma2: f64) -> Result<Vec<SinrEstimate>> {
        if self.trials() == 0 {
            return Err(Error::Precondition(
                "no Monte Carlo trials to average".into(),
            ));
        }
        Ok(self
            .samples
            .iter()
            .map(|s| uatf_from_samples(s, rho, sigma2))
            .collect())
    }
}

fn uatf_from_samples(samples: &[Moments], rho: f64, sigma2: f64) -> SinrEstimate {
    let t = samples.len();
    let tf = t as f64;
    let column = |j: usize| samples.iter().map(|m| m[j]).collect::<Vec<f64>>();
    let cols: [Vec<f64>; 4] = [column(0), column(1), column(2), column(3)];
    let mean: [f64; 4] = std::array::from_fn(|j| pairwise_sum(&cols[j]) / tf);

    let a2 = mean[0] * mean[0] + mean[1] * mean[1];
    let desired = rho * a2;
    let total = rho * mean[2];
    let noise = sigma2 * mean[3];
    let den = total - desired + noise;
    let gamma = if den > 0.0 {
        desired / den
    } else {
        f64::INFINITY
    };

    let std_error = if t < 2 || den <= 0.0 {
        0.0
    } else {
        let grad = [
            2.0 * rho * mean[0] * (den + desired) / (den * den),
            2.0 * rho * mean[1] * (den + desired) / (den * den),
            -desired * rho / (den * den),
            -desired * sigma2 / (den * den),
        ];
        let projected: Vec<f64> = samples
            .iter()
            .map(|m| (0..4).map(|j| grad[j] * (m[j] - mean[j])).sum::<f64>())
            .collect();
        let var = pairwise_sum(&projected.iter().map(|x| x * x).collect::<Vec<_>>()) / (tf - 1.0);
        (var / tf).sqrt()
    };

    SinrEstimate {
        desired_power: desired,
        total_power: total,
        noise_term: noise,
        gamma,
        std_error,
        trials: t,
    }
}

/// Identifies the random streams of one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialKeys {
    pub master_seed: u64,
    pub drop: u64,
}

impl TrialKeys {
    pub fn new(master_seed: u64, drop: u64) -> Self {
        Self { master_seed, drop }
    }

    fn window(&self, trial: u64, part: u64) -> rng::Stream {
        rng::stream(&[self.master_seed, tag::WINDOW, self.drop, trial, part])
    }

    fn phases(&self, trial: u64) -> rng::Stream {
        rng::stream(&[self.master_seed, tag::PHASES, self.drop, trial])
    }

    fn payload(&self, trial: u64) -> rng::Stream {
        rng::stream(&[self.master_seed, tag::PAYLOAD, self.drop, trial])
    }
}

/// Everything a Monte Carlo trial needs.
#[derive(Debug, Clone, Copy)]
pub struct LinkSetup<'a> {
    pub config: &'a SystemConfig,
    pub profile: &'a LargeScaleProfile,
    pub plan: &'a PilotPlan,
    pub keys: TrialKeys,
}

/// Payload-block channels and despread pilots of one trial.
struct Payload {
    channel: ChannelRealization,
    pilots: Vec<CVector>,
}

impl LinkSetup<'_> {
    fn rho(&self) -> f64 {
        self.config.tx_power
    }

    fn sigma2(&self) -> f64 {
        self.config.noise_power
    }

    fn payload(&self, trial: u64) -> Payload {
        let mut rng = self.keys.payload(trial);
        let channel = draw_channel(self.profile, trial, &mut rng);
        let mn = self.profile.mn();
        let pilots = self
            .plan
            .groups
            .iter()
            .map(|group| {
                let mut y = CVector::zeros(mn);
                if !group.is_empty() {
                    receive_pilot_into(
                        &mut y,
                        &channel,
                        group,
                        PilotMode::Plain,
                        self.rho(),
                        self.sigma2(),
                        &mut rng,
                    );
                }
                y
            })
            .collect();
        Payload { channel, pilots }
    }

    /// Covariances re-estimated from the trial's own stationarity window.
    pub fn window_covariances(&self, trial: u64) -> Result<CovarianceSet> {
        let window = WindowPlan::from_config(self.config);
        let schedule = phase_schedule(
            self.plan.num_users(),
            window.shifted_pairs(),
            &mut self.keys.phases(trial),
        );
        estimate_window(
            self.profile,
            self.plan,
            &schedule,
            self.rho(),
            self.sigma2(),
            &window,
            &mut self.keys.window(trial, 0),
            &mut self.keys.window(trial, 1),
        )
    }

    fn estimator(&self, cov_mode: CovMode, trial: u64, perfect: &Estimator) -> Result<Estimator> {
        match cov_mode {
            CovMode::Perfect => Ok(perfect.clone()),
            CovMode::Estimated => {
                Estimator::new(&self.window_covariances(trial)?, self.plan, self.rho())
            }
        }
    }

    fn check(&self, cov_mode: CovMode, trials: usize) -> Result<()> {
        if trials == 0 {
            return Err(Error::Precondition("trials must be at least 1".into()));
        }
        self.config.validate()?;
        if self.plan.num_users() != self.profile.num_users() {
            return Err(Error::Precondition(
                "pilot plan and profile disagree on K".into(),
            ));
        }
        if cov_mode == CovMode::Estimated {
            self.config.validate_for_estimation()?;
        }
        Ok(())
    }
}

/// UatF SINR of every user for each scheme in `schemes`. All schemes see
/// the same windows and payload blocks. A trial whose estimator or combiner
/// fails is skipped for that scheme; more than [`MAX_SKIP_FRACTION`] skips
/// is an error.
pub fn simulate_uatf(
    setup: &LinkSetup<'_>,
    schemes: &[Scheme],
    cov_mode: CovMode,
    trials: usize,
) -> Result<Vec<Vec<SinrEstimate>>> {
    setup.check(cov_mode, trials)?;
    let perfect = Estimator::perfect(setup.profile, setup.plan, setup.rho(), setup.sigma2());

    let per_trial: Vec<Vec<Option<Vec<Moments>>>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let estimator = match setup.estimator(cov_mode, t, &perfect) {
                Ok(e) => e,
                Err(_) => return vec![None; schemes.len()],
            };
            let payload = setup.payload(t);
            let g_hat = estimator.estimate(setup.plan, &payload.pilots);
            schemes
                .iter()
                .map(|&s| {
                    combiner(&g_hat, s)
                        .ok()
                        .map(|w| trial_moments(&w, &payload.channel.g))
                })
                .collect()
        })
        .collect();

    let k = setup.plan.num_users();
    schemes
        .iter()
        .enumerate()
        .map(|(si, _)| {
            let mut acc = UatfAccumulator::new(k);
            let mut skipped = 0usize;
            for trial in &per_trial {
                match &trial[si] {
                    Some(m) => acc.push_moments(m),
                    None => skipped += 1,
                }
            }
            if skipped as f64 > MAX_SKIP_FRACTION * trials as f64 || acc.trials() == 0 {
                return Err(Error::SkipBudget {
                    skipped,
                    total: trials,
                });
            }
            acc.finish(setup.rho(), setup.sigma2())
        })
        .collect()
}

/// Single-scheme form of [`simulate_uatf`].
pub fn uatf_sinr_monte_carlo(
    config: &SystemConfig,
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    scheme: Scheme,
    cov_mode: CovMode,
    trials: usize,
    keys: TrialKeys,
) -> Result<Vec<SinrEstimate>> {
    let setup = LinkSetup {
        config,
        profile,
        plan,
        keys,
    };
    Ok(simulate_uatf(&setup, &[scheme], cov_mode, trials)?.remove(0))
}

/// Per-user mean squared estimation error E‖g_k − ĝ_k‖². Estimates from
/// estimated covariances are multiplied by √ρ first, since Λ̂ already
/// carries the 1/ρ normalization.
pub fn estimation_mse(setup: &LinkSetup<'_>, cov_mode: CovMode, trials: usize) -> Result<Vec<f64>> {
    setup.check(cov_mode, trials)?;
    let perfect = Estimator::perfect(setup.profile, setup.plan, setup.rho(), setup.sigma2());
    let scale = match cov_mode {
        CovMode::Perfect => 1.0,
        CovMode::Estimated => setup.rho().sqrt(),
    };
    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let estimator = setup.estimator(cov_mode, t, &perfect)?;
            let payload = setup.payload(t);
            let g_hat = estimator.estimate(setup.plan, &payload.pilots).scale(scale);
            let err = &payload.channel.g - g_hat;
            Ok((0..err.ncols())
                .map(|k| err.column(k).iter().map(Complex64::norm_sqr).sum())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..setup.plan.num_users())
        .map(|k| pairwise_sum(&per_trial.iter().map(|v| v[k]).collect::<Vec<_>>()) / trials as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{complex_normal, complex_normal_vector, diag_matrix, frobenius};
    use crate::pilots::{assign_pilots, receive_pilot, PilotPolicy};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_config(mn_aps: usize, n: usize, k: usize) -> SystemConfig {
        SystemConfig {
            num_aps: mn_aps,
            antennas_per_ap: n,
            num_users: k,
            num_pilots: k,
            n_sigma: 8 * mn_aps * n,
            n_lambda: 200,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn perfect_estimate_examples() {
        let y = CVector::from_vec(vec![c(2.0, 4.0), c(-1.0, 1.0)]);
        let g = mmse_estimate_perfect(&y, &[1.0, 1.0], &[2.0, 2.0], 1.0).unwrap();
        assert_eq!(g, &y * c(0.5, 0.0));

        let g = mmse_estimate_perfect(&y, &[0.0, 1.0], &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(g[0], c(0.0, 0.0));

        assert!(mmse_estimate_perfect(&y, &[1.0, 1.0], &[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn noiseless_single_user_recovers_channel() {
        let p = LargeScaleProfile::from_gains(&[vec![0.7, 1.3]], 3).unwrap();
        let plan = assign_pilots(1, 1, PilotPolicy::Orthogonal).unwrap();
        // The residual is dominated by the noise itself, ‖n‖/‖g‖ ≈ σ.
        for (sigma2, tol) in [(1e-12, 1e-5), (1e-14, 1e-6)] {
            let mut s = rng::stream(&[50]);
            let ch = draw_channel(&p, 0, &mut s);
            let y = receive_pilot(&ch, &[0], PilotMode::Plain, 1.0, sigma2, &mut s);
            let sigma =
                crate::covariance::perfect_received_covariance(&p, &plan.groups[0], 1.0, sigma2);
            let g = mmse_estimate_perfect(&y, &p.lambda_diag(0), &sigma, 1.0).unwrap();
            let truth = ch.column(0);
            assert!((&g - &truth).norm() / truth.norm() < tol);
        }
    }

    #[test]
    fn imperfect_with_oracles_matches_perfect() {
        let p = LargeScaleProfile::from_gains(&[vec![0.5, 2.0], vec![1.5, 0.1]], 2).unwrap();
        let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin).unwrap();
        let rho = 4.0;
        let sigma = crate::covariance::perfect_received_covariance(&p, &plan.groups[0], rho, 1.0);
        let mut s = rng::stream(&[51]);
        let y = complex_normal_vector(&mut s, 4, 1.0);
        for k in 0..2 {
            let perfect = mmse_estimate_perfect(&y, &p.lambda_diag(k), &sigma, rho).unwrap();
            // Σ̂ fed as Σ_p/ρ with Λ̂ = Λ reproduces the √ρ of the perfect path.
            let sigma_scaled: Vec<f64> = sigma.iter().map(|v| v / rho.sqrt()).collect();
            let (imperfect, w) = mmse_estimate_imperfect(
                &y,
                &diag_matrix(&p.lambda_diag(k)),
                &diag_matrix(&sigma_scaled),
            )
            .unwrap();
            assert!((&imperfect - &perfect).norm() < 1e-12 * perfect.norm());
            assert!((&w * &y - &imperfect).norm() == 0.0);
        }
    }

    #[test]
    fn imperfect_zero_lambda_and_singular_sigma() {
        let y = CVector::from_element(3, c(1.0, -2.0));
        let (g, _) =
            mmse_estimate_imperfect(&y, &CMatrix::zeros(3, 3), &CMatrix::identity(3, 3)).unwrap();
        assert_eq!(g, CVector::zeros(3));
        let err =
            mmse_estimate_imperfect(&y, &CMatrix::identity(3, 3), &diag_matrix(&[1.0, 0.0, 1.0]))
                .unwrap_err();
        assert!(err.to_string().contains("N_Σ ≥ MN"), "{err}");
    }

    #[test]
    fn combiner_examples() {
        let mut s = rng::stream(&[52]);
        let g = CMatrix::from_fn(6, 3, |_, _| complex_normal(&mut s, 1.0));
        assert_eq!(combiner(&g, Scheme::Mrc).unwrap(), g);

        let q = g.clone().qr().q();
        let z = combiner(&q, Scheme::Zf).unwrap();
        assert!(frobenius(&(&z - &q)) < 1e-12);

        let rank_deficient = CMatrix::from_fn(4, 2, |i, _| c(i as f64, 0.0));
        assert!(matches!(
            combiner(&rank_deficient, Scheme::Zf),
            Err(Error::IllConditioned { threshold, .. }) if threshold == ZF_CONDITION_LIMIT
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn zf_identity_and_null_steering(seed in 0u64..100_000, k in 1usize..5, extra in 0usize..5) {
            let mut s = rng::stream(&[53, seed]);
            let g = CMatrix::from_fn(k + extra, k, |_, _| complex_normal(&mut s, 1.0));
            let z = combiner(&g, Scheme::Zf).unwrap();
            let prod = g.adjoint() * &z;
            prop_assert!(frobenius(&(&prod - CMatrix::identity(k, k))) < 1e-8);
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        prop_assert!(prod[(i, j)].norm() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn rate_examples() {
        assert!((achievable_rate(1.0, 10, 200).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(achievable_rate(0.0, 10, 200).unwrap(), 0.0);
        assert!((achievable_rate(3.0, 100, 200).unwrap() - 1.0).abs() < 1e-15);
        assert!(achievable_rate(1.0, 200, 200).is_err());
        assert!(achievable_rate(-1.0, 10, 200).is_err());
    }

    #[test]
    fn known_channel_single_user_gamma() {
        let mut s = rng::stream(&[54]);
        let g = CMatrix::from_fn(5, 1, |_, _| complex_normal(&mut s, 1.0));
        let mut acc = UatfAccumulator::new(1);
        for _ in 0..10 {
            acc.push(&g, &g);
        }
        let rho = 3.0;
        let est = acc.finish(rho, 1.0).unwrap();
        let norm2: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        assert!((est[0].gamma - rho * norm2).abs() < 1e-9 * rho * norm2);
        assert!(est[0].std_error < 1e-9 * est[0].gamma);
    }

    fn symmetric_setup() -> (SystemConfig, LargeScaleProfile, PilotPlan) {
        let mut config = small_config(2, 2, 2);
        config.tx_power = 1.0;
        let p = LargeScaleProfile::from_gains(&[vec![1.0, 0.5], vec![1.0, 0.5]], 2).unwrap();
        let plan = assign_pilots(2, 2, PilotPolicy::Orthogonal).unwrap();
        (config, p, plan)
    }

    #[test]
    fn symmetric_users_agree_within_three_stderr() {
        let (config, p, plan) = symmetric_setup();
        let est = uatf_sinr_monte_carlo(
            &config,
            &p,
            &plan,
            Scheme::Mrc,
            CovMode::Perfect,
            20_000,
            TrialKeys::new(5, 0),
        )
        .unwrap();
        let diff = (est[0].gamma - est[1].gamma).abs();
        let se = (est[0].std_error.powi(2) + est[1].std_error.powi(2)).sqrt();
        assert!(diff < 3.0 * se, "diff {diff}, se {se}");
    }

    #[test]
    fn std_error_scales_with_trials() {
        let (config, p, plan) = symmetric_setup();
        let run = |t, seed| {
            uatf_sinr_monte_carlo(
                &config,
                &p,
                &plan,
                Scheme::Mrc,
                CovMode::Perfect,
                t,
                TrialKeys::new(seed, 0),
            )
            .unwrap()[0]
                .std_error
        };
        let ratio = run(8_000, 6) / run(16_000, 7);
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn gamma_decreases_with_noise() {
        let mut s = rng::stream(&[55]);
        let g = CMatrix::from_fn(4, 1, |_, _| complex_normal(&mut s, 1.0));
        let mut acc = UatfAccumulator::new(1);
        acc.push(&g, &g);
        let gammas: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&s2| acc.finish(1.0, s2).unwrap()[0].gamma)
            .collect();
        assert!(gammas[0] > gammas[1] && gammas[1] > gammas[2]);
    }

    #[test]
    fn mmse_error_orthogonal_to_estimate() {
        let (config, p, plan) = symmetric_setup();
        let setup = LinkSetup {
            config: &config,
            profile: &p,
            plan: &plan,
            keys: TrialKeys::new(8, 0),
        };
        let est = Estimator::perfect(&p, &plan, 1.0, 1.0);
        let samples: Vec<Complex64> = (0..10_000)
            .map(|t| {
                let payload = setup.payload(t);
                let g_hat = est.estimate(&plan, &payload.pilots);
                let gh = g_hat.column(0);
                let err = payload.channel.g.column(0) - gh;
                gh.dotc(&err)
            })
            .collect();
        let n = samples.len() as f64;
        let mean: Complex64 = samples.iter().sum::<Complex64>() / n;
        let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        assert!(mean.norm() < 3.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn skipped_trials_are_counted() {
        let mut config = small_config(1, 1, 2);
        config.num_pilots = 1;
        let p = LargeScaleProfile::from_gains(&[vec![1.0], vec![1.0]], 1).unwrap();
        let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin).unwrap();
        let err = uatf_sinr_monte_carlo(
            &config,
            &p,
            &plan,
            Scheme::Zf,
            CovMode::Perfect,
            50,
            TrialKeys::new(1, 0),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::SkipBudget {
                    skipped: 50,
                    total: 50
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let (config, p, plan) = symmetric_setup();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let setup = LinkSetup {
                        config: &config,
                        profile: &p,
                        plan: &plan,
                        keys: TrialKeys::new(9, 0),
                    };
                    simulate_uatf(&setup, &[Scheme::Mrc, Scheme::Zf], CovMode::Estimated, 200)
                        .unwrap()
                })
        };
        assert_eq!(run(1), run(3));
    }
}
