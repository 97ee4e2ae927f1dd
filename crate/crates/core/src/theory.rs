//! Closed-form SINR approximations for MRC and ZF with estimated
//! covariances, plus the complex Wishart moments they rest on.
//!
//! Every expression is evaluated in normalized units: the pilot and data
//! power is folded into the noise, so traces use Λ_k and
//! Σ_p = Σ_{i∈U_p} Λ_i + (σ²/ρ) I. Since all oracle covariances are
//! diagonal, each trace is an O(MN) sum over diagonals.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_normal, hpd_inverse, CMatrix};
use crate::pilots::PilotPlan;
use crate::scenario::{LargeScaleProfile, SystemConfig};

#[derive(Debug, Clone, Copy)]
pub enum WishartMoment<'a> {
    /// E[tr W⁻¹]
    TrInv,
    /// E[tr W⁻²]
    TrInvSq,
    /// E[|tr(W⁻¹A)|²]
    QuadForm(&'a CMatrix),
}

/// Moments of a complex Wishart matrix W ~ W_m(n, I).
pub fn wishart_moment(kind: WishartMoment<'_>, n: usize, m: usize) -> Result<f64> {
    let d = n as f64 - m as f64;
    match kind {
        WishartMoment::TrInv => {
            if n <= m {
                return Err(Error::Precondition(format!(
                    "E[tr W⁻¹] needs n > m (n = {n}, m = {m})"
                )));
            }
            Ok(m as f64 / d)
        }
        WishartMoment::TrInvSq => {
            if n <= m + 1 {
                return Err(Error::Precondition(format!(
                    "E[tr W⁻²] needs n > m + 1 (n = {n}, m = {m})"
                )));
            }
            Ok((m * n) as f64 / (d * d * d - d))
        }
        WishartMoment::QuadForm(a) => {
            if n <= m + 1 {
                return Err(Error::Precondition(format!(
                    "E[|tr(W⁻¹A)|²] needs n > m + 1 (n = {n}, m = {m})"
                )));
            }
            if a.nrows() != m || a.ncols() != m {
                return Err(Error::Precondition(format!(
                    "A must be {m}×{m}, got {}×{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let tr = a.trace().norm_sqr();
            let trf: f64 = a.iter().map(|z| z.norm_sqr()).sum();
            Ok((tr + trf / d) / (d * d - 1.0))
        }
    }
}

/// (μ₁, μ₂) = (N_Σ³/(((N_Σ−MN)²−1)(N_Σ−MN)), N_Σ²/((N_Σ−MN)²−1)).
pub fn mu_factors(n_sigma: usize, mn: usize) -> Result<(f64, f64)> {
    if n_sigma <= mn + 1 {
        return Err(Error::Precondition(format!(
            "μ factors need N_Σ > MN + 1 (N_Σ = {n_sigma}, MN = {mn})"
        )));
    }
    let n = n_sigma as f64;
    let d = n - mn as f64;
    let q = d * d - 1.0;
    Ok((n * n * n / (q * d), n * n / q))
}

/// Whether the closed forms account for covariance-estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKnowledge {
    /// Oracle covariances: N_Σ, N_Λ → ∞.
    Perfect,
    /// Covariances estimated from N_Σ and N_Λ blocks.
    Estimated,
}

/// Scalar factors that carry the estimation error into the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorFactors {
    /// N_Σ/(N_Σ−MN), the mean inflation of Σ̂⁻¹.
    pub c: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// 1/N_Σ
    pub inv_ns: f64,
    /// 1/N_Λ
    pub inv_nl: f64,
}

impl ErrorFactors {
    pub fn new(
        knowledge: CovarianceKnowledge,
        n_sigma: usize,
        n_lambda: usize,
        mn: usize,
    ) -> Result<Self> {
        match knowledge {
            CovarianceKnowledge::Perfect => Ok(Self {
                c: 1.0,
                mu1: 1.0,
                mu2: 1.0,
                inv_ns: 0.0,
                inv_nl: 0.0,
            }),
            CovarianceKnowledge::Estimated => {
                if n_lambda == 0 {
                    return Err(Error::Precondition("N_Λ must be at least 1".into()));
                }
                let (mu1, mu2) = mu_factors(n_sigma, mn)?;
                let ns = n_sigma as f64;
                Ok(Self {
                    c: ns / (ns - mn as f64),
                    mu1,
                    mu2,
                    inv_ns: 1.0 / ns,
                    inv_nl: 1.0 / n_lambda as f64,
                })
            }
        }
    }
}

/// Diagonals of Λ_k and of each user's Σ_{p(k)} in normalized units.
#[derive(Debug, Clone)]
struct Diagonals {
    mn: usize,
    lambda: Vec<Vec<f64>>,
    sigma_of_user: Vec<Vec<f64>>,
    noise: f64,
}

impl Diagonals {
    fn new(profile: &LargeScaleProfile, plan: &PilotPlan, config: &SystemConfig) -> Result<Self> {
        if plan.num_users() != profile.num_users() {
            return Err(Error::Precondition(
                "pilot plan and profile disagree on K".into(),
            ));
        }
        if !(config.tx_power > 0.0) || !(config.noise_power > 0.0) {
            return Err(Error::Precondition(
                "tx_power and noise_power must be positive".into(),
            ));
        }
        let noise = config.noise_power / config.tx_power;
        let lambda: Vec<Vec<f64>> = (0..profile.num_users())
            .map(|k| profile.lambda_diag(k))
            .collect();
        let sigma_of_user = (0..profile.num_users())
            .map(|k| {
                let mut s = vec![noise; profile.mn()];
                for &i in plan.group_of(k) {
                    for (sj, lj) in s.iter_mut().zip(&lambda[i]) {
                        *sj += lj;
                    }
                }
                s
            })
            .collect();
        Ok(Self {
            mn: profile.mn(),
            lambda,
            sigma_of_user,
            noise,
        })
    }

    /// W̄_k = Λ_k Σ_p⁻¹
    fn w_bar(&self, k: usize) -> Vec<f64> {
        self.lambda[k]
            .iter()
            .zip(&self.sigma_of_user[k])
            .map(|(l, s)| l / s)
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

fn sum(a: &[f64]) -> f64 {
    a.iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrcUserTerms {
    /// (N_Σ/(N_Σ−MN))² tr(W̄_kᴴΛ_k)²
    pub desired: f64,
    /// I_i^EX for every user i.
    pub interference_ex: Vec<f64>,
    /// I_i^IN for every co-pilot user i (including k), in group order.
    pub interference_in: Vec<f64>,
    /// N_k before multiplication by the noise power.
    pub noise_factor: f64,
    /// Normalized noise power σ²/ρ.
    pub noise_power: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrcClosedForm {
    pub users: Vec<MrcUserTerms>,
}

impl MrcClosedForm {
    pub fn gammas(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.gamma).collect()
    }
}

/// Closed-form MRC SINR with the desired term squared and W̄_k = Λ_kΣ_p⁻¹.
pub fn mrc_sinr_closed(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
    knowledge: CovarianceKnowledge,
) -> Result<MrcClosedForm> {
    let d = Diagonals::new(profile, plan, config)?;
    let f = ErrorFactors::new(knowledge, config.n_sigma, config.n_lambda, d.mn)?;
    let mn = d.mn as f64;
    let half_nl = 0.5 * f.inv_nl;

    let users = (0..profile.num_users())
        .map(|k| {
            let lk = &d.lambda[k];
            let sk = &d.sigma_of_user[k];
            let wk = d.w_bar(k);
            let a = dot(&wk, lk);
            let desired = (f.c * a).powi(2);
            let tr_wk = sum(&wk);
            let tr_sigma = sum(sk);
            let tr_sigma_inv: f64 = sk.iter().map(|s| 1.0 / s).sum();
            let tr_sigma_inv2_lk: f64 = sk.iter().zip(lk).map(|(s, l)| l / (s * s)).sum();

            let interference_ex: Vec<f64> = d
                .lambda
                .iter()
                .map(|li| {
                    f.mu1 * mn * half_nl * dot(li, sk)
                        + f.mu1 * half_nl * tr_wk * dot(li, lk)
                        + f.mu1 * dot3(&wk, li, lk)
                })
                .collect();

            let interference_in: Vec<f64> = plan
                .group_of(k)
                .iter()
                .map(|&i| {
                    let li = &d.lambda[i];
                    let wi = d.w_bar(i);
                    let li2: Vec<f64> = li.iter().map(|x| x * x).collect();
                    let wi2: Vec<f64> = wi.iter().map(|x| x * x).collect();
                    let wk2: Vec<f64> = wk.iter().map(|x| x * x).collect();
                    f.mu1 * f.inv_ns * half_nl * tr_sigma_inv2_lk * dot(&li2, lk)
                        + f.mu1 * f.inv_ns * dot(&wk2, &li2)
                        + f.mu1 * mn * f.inv_ns * half_nl * tr_sigma_inv * dot(&li2, sk)
                        + f.mu2 * dot(lk, &wi).powi(2)
                        + f.mu2 * half_nl * dot3(&wi2, sk, sk)
                        + f.mu2 * half_nl * dot3(&wi2, lk, lk)
                })
                .collect();

            let noise_factor =
                f.mu1 * a + f.mu1 * mn * half_nl * tr_sigma + f.mu1 * half_nl * sum(lk) * tr_wk;

            let den =
                sum(&interference_ex) + sum(&interference_in) - desired + d.noise * noise_factor;
            if !(den > 0.0) {
                return Err(Error::Precondition(format!(
                    "MRC closed-form denominator is not positive for user {k} ({den}); increase N_Σ"
                )));
            }
            Ok(MrcUserTerms {
                desired,
                interference_ex,
                interference_in,
                noise_factor,
                noise_power: d.noise,
                gamma: desired / den,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MrcClosedForm { users })
}

/// Large-MN limit of [`mrc_sinr_closed`], split so the 1/N_Λ dependence
/// is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrcLimitTerms {
    pub numerator: f64,
    /// Denominator terms independent of N_Λ.
    pub fixed: f64,
    /// Denominator terms proportional to 1/N_Λ.
    pub inv_n_lambda: f64,
    pub gamma: f64,
}

/// Leading-order (O(MN²)) terms of the MRC closed form for N_Σ ∝ MN → ∞:
/// γ_k → c²tr(W̄_kΛ_k)² / (Σ_{i∈U_p} μ₂ tr(Λ_kW̄_i)² − c²tr(W̄_kΛ_k)²
/// + (μ₁/(2N_Λ))[MN Σ_i tr(Λ_iΣ_p) + tr(W̄_k) Σ_i tr(Λ_iΛ_k)
/// + (MN/N_Σ) tr(Σ_p⁻¹) Σ_{i∈U_p} tr(Λ_i²Σ_p) + (σ²/ρ)(MN tr(Σ_p) + tr(Λ_k) tr(W̄_k))]).
pub fn mrc_sinr_limit(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
) -> Result<Vec<MrcLimitTerms>> {
    let d = Diagonals::new(profile, plan, config)?;
    let f = ErrorFactors::new(
        CovarianceKnowledge::Estimated,
        config.n_sigma,
        config.n_lambda,
        d.mn,
    )?;
    let mn = d.mn as f64;
    (0..profile.num_users())
        .map(|k| {
            let lk = &d.lambda[k];
            let sk = &d.sigma_of_user[k];
            let wk = d.w_bar(k);
            let numerator = (f.c * dot(&wk, lk)).powi(2);
            let coherent: f64 = plan
                .group_of(k)
                .iter()
                .map(|&i| f.mu2 * dot(lk, &d.w_bar(i)).powi(2))
                .sum();
            let tr_wk = sum(&wk);
            let tr_sigma_inv: f64 = sk.iter().map(|s| 1.0 / s).sum();
            let all: f64 = d
                .lambda
                .iter()
                .map(|li| mn * dot(li, sk) + tr_wk * dot(li, lk))
                .sum();
            let in_group: f64 = plan
                .group_of(k)
                .iter()
                .map(|&i| {
                    let li2s: f64 = d.lambda[i].iter().zip(sk).map(|(l, s)| l * l * s).sum();
                    mn * f.inv_ns * tr_sigma_inv * li2s
                })
                .sum();
            let noise = d.noise * (mn * sum(sk) + sum(lk) * tr_wk);
            let fixed = coherent - numerator;
            let inv_n_lambda = 0.5 * f.mu1 * f.inv_nl * (all + in_group + noise);
            let den = fixed + inv_n_lambda;
            if !(den > 0.0) {
                return Err(Error::Precondition(format!(
                    "MRC limit denominator is not positive for user {k} ({den})"
                )));
            }
            Ok(MrcLimitTerms {
                numerator,
                fixed,
                inv_n_lambda,
                gamma: numerator / den,
            })
        })
        .collect()
}

/// Alternative large-MN MRC expression with its 1/ρ noise factor read as
/// the normalized noise power. It is dimensionally inconsistent and does
/// not track [`mrc_sinr_closed`]; kept for comparison with [`mrc_sinr_limit`].
pub fn mrc_sinr_limit_alt(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
) -> Result<Vec<f64>> {
    let d = Diagonals::new(profile, plan, config)?;
    if config.n_lambda == 0 {
        return Err(Error::Precondition("N_Λ must be at least 1".into()));
    }
    mu_factors(config.n_sigma, d.mn)?;
    let half_nl = 0.5 / config.n_lambda as f64;
    let ns = config.n_sigma as f64;

    (0..profile.num_users())
        .map(|k| {
            let lk = &d.lambda[k];
            let sk = &d.sigma_of_user[k];
            let num = dot(&d.w_bar(k), lk).powi(2);
            let tr_sigma_inv: f64 = sk.iter().map(|s| 1.0 / s).sum();
            let in_group: f64 = plan
                .group_of(k)
                .iter()
                .map(|&i| {
                    let li = &d.lambda[i];
                    let a = dot3(lk, li, sk).powi(2);
                    let b: f64 = li
                        .iter()
                        .zip(sk)
                        .zip(lk)
                        .map(|((l, s), m)| (l * s).powi(2) * (s * s + m * m))
                        .sum();
                    let li2s: f64 = li.iter().zip(sk).map(|(l, s)| l * l * s).sum();
                    a + half_nl * (b + tr_sigma_inv * li2s)
                })
                .sum();
            let all: f64 = d.lambda.iter().map(|li| ns * half_nl * dot(li, sk)).sum();
            let den = in_group + all + d.noise * ns * half_nl * sum(sk) - num;
            if !(den > 0.0) {
                return Err(Error::Precondition(format!(
                    "MRC limit denominator is not positive for user {k} ({den})"
                )));
            }
            Ok(num / den)
        })
        .collect()
}

/// Γ̃ as a diagonal: the error covariance Σ_k E[g̃_k g̃_kᴴ] plus noise,
/// Σ_k [Λ_k − 2cΛ_k²Σ_p⁻¹ + μ₁(Λ_k²Σ_p⁻¹ + (1/(2N_Λ))(Σ_{j∈U_p, j≠k} Λ_j²Σ_p⁻¹
/// + Λ_k tr(Λ_kΣ_p⁻¹) + MN Σ_p))] + (σ²/ρ) I.
pub fn zf_gamma_tilde(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
    knowledge: CovarianceKnowledge,
) -> Result<Vec<f64>> {
    let d = Diagonals::new(profile, plan, config)?;
    let f = ErrorFactors::new(knowledge, config.n_sigma, config.n_lambda, d.mn)?;
    Ok(gamma_tilde_diag(&d, plan, &f))
}

fn gamma_tilde_diag(d: &Diagonals, plan: &PilotPlan, f: &ErrorFactors) -> Vec<f64> {
    let mn = d.mn as f64;
    let half_nl = 0.5 * f.inv_nl;
    let mut g = vec![d.noise; d.mn];
    for k in 0..d.lambda.len() {
        let lk = &d.lambda[k];
        let sk = &d.sigma_of_user[k];
        let tr_lk_sinv: f64 = lk.iter().zip(sk).map(|(l, s)| l / s).sum();
        for m in 0..d.mn {
            let co: f64 = plan
                .group_of(k)
                .iter()
                .filter(|&&j| j != k)
                .map(|&j| d.lambda[j][m].powi(2) / sk[m])
                .sum();
            let l2s = lk[m] * lk[m] / sk[m];
            g[m] += lk[m] - 2.0 * f.c * l2s
                + f.mu1 * (l2s + half_nl * (co + lk[m] * tr_lk_sinv + mn * sk[m]));
        }
    }
    g
}

/// Γ̃ with the Σ̂⁻¹ expectations replaced by averages over `samples`
/// complex Wishart draws W ~ W_MN(N_Σ, I), using Σ̂⁻¹ = N_Σ Σ^{−1/2} W⁻¹ Σ^{−1/2}.
/// Serves as a cross-check of [`zf_gamma_tilde`].
pub fn zf_gamma_tilde_sampled<R: Rng + ?Sized>(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
    samples: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    let d = Diagonals::new(profile, plan, config)?;
    let f = ErrorFactors::new(
        CovarianceKnowledge::Estimated,
        config.n_sigma,
        config.n_lambda,
        d.mn,
    )?;
    if samples == 0 {
        return Err(Error::Precondition(
            "need at least one Wishart sample".into(),
        ));
    }
    let mn = d.mn;
    let ns = config.n_sigma as f64;
    let mut e_inv = CMatrix::zeros(mn, mn);
    let mut e_inv2 = CMatrix::zeros(mn, mn);
    for _ in 0..samples {
        let w = sample_wishart(config.n_sigma, mn, rng);
        let inv = hpd_inverse(&w, "Wishart sample")?;
        e_inv2 += &inv * &inv;
        e_inv += inv;
    }
    e_inv.unscale_mut(samples as f64);
    e_inv2.unscale_mut(samples as f64);

    let half_nl = 0.5 * f.inv_nl;
    let mut g = CMatrix::zeros(mn, mn);
    for k in 0..d.lambda.len() {
        let s_half_inv: Vec<f64> = d.sigma_of_user[k].iter().map(|s| 1.0 / s.sqrt()).collect();
        let scale = |m: &CMatrix, c: f64| {
            CMatrix::from_fn(mn, mn, |i, j| {
                m[(i, j)] * (c * s_half_inv[i] * s_half_inv[j])
            })
        };
        // E[Σ̂⁻¹] and E[Σ̂⁻¹ Σ Σ̂⁻¹] for this user's group.
        let s1 = scale(&e_inv, ns);
        let s2 = scale(&e_inv2, ns * ns);
        let lam = |u: usize| crate::linalg::diag_matrix(&d.lambda[u]);
        let lk = lam(k);
        let sk = crate::linalg::diag_matrix(&d.sigma_of_user[k]);
        let cross = &lk * &s1 * &lk;
        let mut second = &lk * &s2 * &lk;
        for &j in plan.group_of(k).iter().filter(|&&j| j != k) {
            let lj = lam(j);
            second += (&lj * &s2 * &lj).scale(half_nl);
        }
        second += lk.scale(half_nl * (&s2 * &lk).trace().re);
        second += sk.scale(half_nl * (&s2 * &sk).trace().re);
        g += lk - &cross - cross.adjoint() + second;
    }
    for i in 0..mn {
        g[(i, i)] += Complex64::new(d.noise, 0.0);
    }
    Ok(crate::linalg::hermitian_part(&g))
}

/// W = Σ_n z_n z_nᴴ with z_n ~ CN(0, I_m), n = 1..dof.
pub fn sample_wishart<R: Rng + ?Sized>(dof: usize, m: usize, rng: &mut R) -> CMatrix {
    let mut w = CMatrix::zeros(m, m);
    let mut z = crate::linalg::CVector::zeros(m);
    for _ in 0..dof {
        for zi in z.iter_mut() {
            *zi = complex_normal(rng, 1.0);
        }
        crate::linalg::add_outer_upper(&mut w, &z);
    }
    crate::linalg::fill_lower_from_upper(&mut w);
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZfGroup {
    pub users: Vec<usize>,
    /// Ξ_p^th, row-major |U_p|×|U_p|.
    pub xi: Vec<f64>,
    /// Ξ̃_p^th, row-major |U_p|×|U_p|.
    pub xi_tilde: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZfClosedForm {
    pub groups: Vec<ZfGroup>,
    /// Diagonal of Γ̃.
    pub gamma_tilde: Vec<f64>,
    /// Numerator N (antennas per AP).
    pub numerator: f64,
    pub gamma: Vec<f64>,
}

impl ZfClosedForm {
    pub fn gamma_tilde_matrix(&self) -> CMatrix {
        crate::linalg::diag_matrix(&self.gamma_tilde)
    }
}

/// Closed-form ZF SINR γ_k = N / (e_qᵀ Ξ⁻¹ Ξ̃ Ξ⁻¹ e_q), with Ξ and Ξ̃ the
/// in-group trace matrices divided by N. Off-diagonal entries use
/// E[Λ̂_k X Λ̂_i] = Λ_k X Λ_i + (1/(2N_Λ))(Λ_i X Λ_k + Λ_k tr(XΛ_i) + Λ_i tr(XΛ_k)).
pub fn zf_sinr_closed(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
    knowledge: CovarianceKnowledge,
) -> Result<ZfClosedForm> {
    let d = Diagonals::new(profile, plan, config)?;
    let f = ErrorFactors::new(knowledge, config.n_sigma, config.n_lambda, d.mn)?;
    let gt = gamma_tilde_diag(&d, plan, &f);
    let n = profile.antennas_per_ap() as f64;
    let mn = d.mn as f64;
    let half_nl = 0.5 * f.inv_nl;

    let mut gamma = vec![0.0; profile.num_users()];
    let mut groups = Vec::new();
    for users in plan.groups.iter().filter(|g| !g.is_empty()) {
        let s = &d.sigma_of_user[users[0]];
        let q = users.len();
        let sinv_l: Vec<f64> = users
            .iter()
            .map(|&u| d.lambda[u].iter().zip(s).map(|(l, x)| l / x).sum())
            .collect();
        let tr_l: Vec<f64> = users.iter().map(|&u| sum(&d.lambda[u])).collect();
        let tr_lg: Vec<f64> = users.iter().map(|&u| dot(&d.lambda[u], &gt)).collect();
        let tr_s = sum(s);
        let tr_sg = dot(s, &gt);

        let mut xi = DMatrix::<f64>::zeros(q, q);
        let mut xi_t = DMatrix::<f64>::zeros(q, q);
        for a in 0..q {
            for b in a..q {
                let (lk, li) = (&d.lambda[users[a]], &d.lambda[users[b]]);
                let lls: Vec<f64> = lk
                    .iter()
                    .zip(li)
                    .zip(s)
                    .map(|((x, y), z)| x * y / z)
                    .collect();
                let (x, xt) = if a == b {
                    (
                        f.mu1 * sum(&lls)
                            + f.mu1 * mn * half_nl * tr_s
                            + f.mu1 * half_nl * tr_l[a] * sinv_l[a],
                        f.mu1 * dot(&lls, &gt)
                            + f.mu1 * mn * half_nl * tr_sg
                            + f.mu1 * half_nl * tr_lg[a] * sinv_l[a],
                    )
                } else {
                    (
                        f.mu1 * sum(&lls)
                            + f.mu1
                                * half_nl
                                * (sum(&lls) + tr_l[a] * sinv_l[b] + tr_l[b] * sinv_l[a]),
                        f.mu1 * dot(&lls, &gt)
                            + f.mu1
                                * half_nl
                                * (dot(&lls, &gt) + tr_lg[a] * sinv_l[b] + tr_lg[b] * sinv_l[a]),
                    )
                };
                xi[(a, b)] = x / n;
                xi[(b, a)] = x / n;
                xi_t[(a, b)] = xt / n;
                xi_t[(b, a)] = xt / n;
            }
        }
        let inv = xi
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("Ξ_p is singular for pilot group {users:?}")))?
            .inverse();
        let m = &inv * &xi_t * &inv;
        for (pos, &u) in users.iter().enumerate() {
            let v = m[(pos, pos)];
            if !(v > 0.0) {
                return Err(Error::Singular(format!(
                    "Ξ_p⁻¹Ξ̃_pΞ_p⁻¹ is not positive for user {u}"
                )));
            }
            gamma[u] = n / v;
        }
        groups.push(ZfGroup {
            users: users.clone(),
            xi: xi.transpose().as_slice().to_vec(),
            xi_tilde: xi_t.transpose().as_slice().to_vec(),
        });
    }
    Ok(ZfClosedForm {
        groups,
        gamma_tilde: gt,
        numerator: n,
        gamma,
    })
}

/// Closed-form SINR of every user for one receiver.
pub fn closed_form_gammas(
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    config: &SystemConfig,
    scheme: crate::linkproc::Scheme,
    knowledge: CovarianceKnowledge,
) -> Result<Vec<f64>> {
    match scheme {
        crate::linkproc::Scheme::Mrc => {
            Ok(mrc_sinr_closed(profile, plan, config, knowledge)?.gammas())
        }
        crate::linkproc::Scheme::Zf => Ok(zf_sinr_closed(profile, plan, config, knowledge)?.gamma),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramDeviation {
    pub mn: usize,
    /// Mean of ‖(1/MN) Ĝ_pᴴ Ĝ_i‖_F over pilot pairs p ≠ i.
    pub cross_group: f64,
    pub cross_group_std_error: f64,
    /// Mean of ‖(1/MN) Ĝ_pᴴ Ĝ_p − (1/M) Ξ_p‖_F over groups.
    pub in_group: f64,
    pub in_group_std_error: f64,
    pub trials: usize,
}

/// Monte Carlo check of the large-MN Gram approximations behind the ZF
/// closed form, using oracle-covariance channel estimates. `cross_group`
/// is zero when there is a single used pilot.
pub fn gram_diagnostics(
    config: &SystemConfig,
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    trials: usize,
    keys: crate::linkproc::TrialKeys,
) -> Result<GramDeviation> {
    use crate::linkproc::Estimator;
    use crate::rng::{self, tag};
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    let d = Diagonals::new(profile, plan, config)?;
    let rho = config.tx_power;
    let sigma2 = config.noise_power;
    let est = Estimator::perfect(profile, plan, rho, sigma2);
    let mn = profile.mn();
    let used: Vec<&Vec<usize>> = plan.groups.iter().filter(|g| !g.is_empty()).collect();

    // (1/M) Ξ_p = (1/MN) E[Ĝ_pᴴĜ_p] with oracle covariances.
    let targets: Vec<DMatrix<f64>> = used
        .iter()
        .map(|users| {
            let s = &d.sigma_of_user[users[0]];
            DMatrix::from_fn(users.len(), users.len(), |a, b| {
                let v: f64 = d.lambda[users[a]]
                    .iter()
                    .zip(&d.lambda[users[b]])
                    .zip(s)
                    .map(|((x, y), z)| x * y / z)
                    .sum();
                v / mn as f64
            })
        })
        .collect();

    let mut cross = Vec::with_capacity(trials);
    let mut in_group = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let mut r = rng::stream(&[keys.master_seed, tag::CHECK, keys.drop, t]);
        let ch = crate::channel::draw_channel(profile, t, &mut r);
        let pilots: Vec<_> = plan
            .groups
            .iter()
            .map(|g| {
                crate::pilots::receive_pilot(
                    &ch,
                    g,
                    crate::pilots::PilotMode::Plain,
                    rho,
                    sigma2,
                    &mut r,
                )
            })
            .collect();
        let g_hat = est.estimate(plan, &pilots);
        let block =
            |users: &[usize]| CMatrix::from_fn(mn, users.len(), |i, j| g_hat[(i, users[j])]);
        let mut c_acc = Vec::new();
        for a in 0..used.len() {
            for b in (a + 1)..used.len() {
                let m = block(used[a]).adjoint() * block(used[b]);
                c_acc.push(crate::linalg::frobenius(&m) / mn as f64);
            }
        }
        cross.push(if c_acc.is_empty() {
            0.0
        } else {
            sum(&c_acc) / c_acc.len() as f64
        });
        let dev: f64 = used
            .iter()
            .zip(&targets)
            .map(|(users, target)| {
                let gp = block(users);
                let gram = (gp.adjoint() * &gp).unscale(mn as f64);
                let diff = CMatrix::from_fn(users.len(), users.len(), |a, b| {
                    gram[(a, b)] - Complex64::new(target[(a, b)], 0.0)
                });
                crate::linalg::frobenius(&diff)
            })
            .sum::<f64>()
            / used.len() as f64;
        in_group.push(dev);
    }
    let (cm, cs) = mean_and_stderr(&cross);
    let (im, is) = mean_and_stderr(&in_group);
    Ok(GramDeviation {
        mn,
        cross_group: cm,
        cross_group_std_error: cs,
        in_group: im,
        in_group_std_error: is,
        trials,
    })
}

/// [`gram_diagnostics`] for the same geometry with each antenna count.
pub fn gram_sequence(
    config: &SystemConfig,
    profile: &LargeScaleProfile,
    plan: &PilotPlan,
    antennas_per_ap: &[usize],
    trials: usize,
    keys: crate::linkproc::TrialKeys,
) -> Result<Vec<GramDeviation>> {
    antennas_per_ap
        .iter()
        .map(|&n| {
            let p = profile.with_antennas(n);
            let c = SystemConfig {
                antennas_per_ap: n,
                ..config.clone()
            };
            gram_diagnostics(&c, &p, plan, trials, keys)
        })
        .collect()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = crate::linalg::pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilots::{assign_pilots, PilotPolicy};
    use crate::rng;
    use proptest::prelude::*;

    fn config(n_sigma: usize, n_lambda: usize) -> SystemConfig {
        SystemConfig {
            n_sigma,
            n_lambda,
            tx_power: 1.0,
            noise_power: 1.0,
            ..SystemConfig::default()
        }
    }

    fn identity_profile(mn: usize) -> LargeScaleProfile {
        LargeScaleProfile::from_gains(&[vec![1.0]], mn).unwrap()
    }

    #[test]
    fn wishart_examples() {
        assert!((wishart_moment(WishartMoment::TrInv, 10, 2).unwrap() - 0.25).abs() < 1e-15);
        assert!(
            (wishart_moment(WishartMoment::TrInvSq, 10, 2).unwrap() - 20.0 / 504.0).abs() < 1e-15
        );
        let a = CMatrix::identity(2, 2);
        let q = wishart_moment(WishartMoment::QuadForm(&a), 10, 2).unwrap();
        assert!((q - (4.0 + 2.0 / 8.0) / 63.0).abs() < 1e-15);
        assert!((q - 0.067460).abs() < 1e-6);
    }

    #[test]
    fn wishart_preconditions() {
        let err = wishart_moment(WishartMoment::TrInv, 2, 2).unwrap_err();
        assert!(err.to_string().contains("n > m"));
        assert!(wishart_moment(WishartMoment::TrInvSq, 3, 2).is_err());
        let a = CMatrix::identity(3, 3);
        assert!(wishart_moment(WishartMoment::QuadForm(&a), 10, 2).is_err());
    }

    #[test]
    fn mu_examples() {
        let (mu1, mu2) = mu_factors(1000, 250).unwrap();
        assert!((mu1 - 1e9 / (562_499.0 * 750.0)).abs() < 1e-12);
        assert!((mu1 - 2.37037).abs() < 1e-5);
        assert!((mu2 - 1e6 / 562_499.0).abs() < 1e-12);
        assert!((mu2 - 1.77778).abs() < 1e-5);
        let (a, b) = mu_factors(10_000_000, 250).unwrap();
        assert!((a - 1.0).abs() < 1e-4 && (b - 1.0).abs() < 1e-4);
        assert!(mu_factors(251, 250).is_err());
    }

    #[test]
    fn gamma_tilde_perfect_limit_examples() {
        let p = identity_profile(8);
        let plan = assign_pilots(1, 1, PilotPolicy::Orthogonal).unwrap();
        let g = zf_gamma_tilde(&p, &plan, &config(64, 32), CovarianceKnowledge::Perfect).unwrap();
        assert!(g.iter().all(|&v| (v - 1.5).abs() < 1e-15));

        let big = zf_gamma_tilde(
            &p,
            &plan,
            &config(1_000_000, 1_000_000),
            CovarianceKnowledge::Estimated,
        )
        .unwrap();
        assert!(big.iter().zip(&g).all(|(a, b)| ((a - b) / b).abs() < 1e-4));
    }

    #[test]
    fn zf_symmetric_group_is_symmetric() {
        let p =
            LargeScaleProfile::from_gains(&[vec![0.3, 1.0, 0.5], vec![0.3, 1.0, 0.5]], 4).unwrap();
        let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin).unwrap();
        let zf =
            zf_sinr_closed(&p, &plan, &config(100, 50), CovarianceKnowledge::Estimated).unwrap();
        assert!((zf.gamma[0] - zf.gamma[1]).abs() <= 1e-12 * zf.gamma[0]);
        let xi = &zf.groups[0].xi;
        assert_eq!(xi[1], xi[2]);
    }

    #[test]
    fn zf_rank_deficient_group_is_an_error() {
        // Identical users sharing a pilot with perfect covariance make Ξ_p rank one.
        let p = LargeScaleProfile::from_gains(&[vec![1.0, 1.0], vec![1.0, 1.0]], 2).unwrap();
        let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin).unwrap();
        let err =
            zf_sinr_closed(&p, &plan, &config(100, 50), CovarianceKnowledge::Perfect).unwrap_err();
        assert!(matches!(err, Error::Singular(_)), "{err}");
    }

    #[test]
    fn zf_numerator_is_antenna_count() {
        let p = LargeScaleProfile::from_gains(&[vec![0.2, 1.0], vec![0.9, 0.1]], 4).unwrap();
        let plan = assign_pilots(2, 2, PilotPolicy::Orthogonal).unwrap();
        let a =
            zf_sinr_closed(&p, &plan, &config(200, 50), CovarianceKnowledge::Estimated).unwrap();
        let b = zf_sinr_closed(
            &p.with_antennas(8),
            &plan,
            &config(200, 50),
            CovarianceKnowledge::Estimated,
        )
        .unwrap();
        assert_eq!(b.numerator, 2.0 * a.numerator);
    }

    #[test]
    fn mrc_limit_single_user_is_finite() {
        let p = identity_profile(8);
        let plan = assign_pilots(1, 1, PilotPolicy::Orthogonal).unwrap();
        let g = mrc_sinr_limit(&p, &plan, &config(64, 32)).unwrap();
        assert!(g[0].gamma.is_finite() && g[0].gamma > 0.0);
        let alt = mrc_sinr_limit_alt(&p, &plan, &config(64, 32)).unwrap();
        assert!(alt[0].is_finite());
    }

    #[test]
    fn limit_inverse_n_lambda_terms_halve() {
        let p = random_profile(5, 3, 2, 8);
        let plan = assign_pilots(3, 2, PilotPolicy::RoundRobin).unwrap();
        let a = mrc_sinr_limit(&p, &plan, &config(100, 40)).unwrap();
        let b = mrc_sinr_limit(&p, &plan, &config(100, 80)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.fixed, y.fixed);
            assert!((x.inv_n_lambda - 2.0 * y.inv_n_lambda).abs() <= 1e-14 * x.inv_n_lambda);
        }
    }

    fn random_profile(seed: u64, k: usize, m: usize, n: usize) -> LargeScaleProfile {
        use rand::Rng as _;
        let mut s = rng::stream(&[60, seed]);
        let gains: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..m)
                    .map(|_| 10f64.powf(-2.0 + 2.5 * s.random::<f64>()))
                    .collect()
            })
            .collect();
        LargeScaleProfile::from_gains(&gains, n).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn mrc_terms_nonnegative(seed in 0u64..10_000, k in 1usize..5, p in 1usize..5, n_l in 10usize..500) {
            let profile = random_profile(seed, k, 3, 2);
            let plan = assign_pilots(k, p, PilotPolicy::auto(k, p)).unwrap();
            let cfg = config(6 * 4, n_l);
            if let Ok(form) = mrc_sinr_closed(&profile, &plan, &cfg, CovarianceKnowledge::Estimated) {
                for u in &form.users {
                    prop_assert!(u.interference_ex.iter().all(|&v| v >= -1e-12));
                    prop_assert!(u.interference_in.iter().all(|&v| v >= -1e-12));
                    prop_assert!(u.noise_factor >= -1e-12);
                    prop_assert!(u.gamma >= 0.0);
                }
            }
        }

        #[test]
        fn joint_power_scaling_invariance(seed in 0u64..10_000, k in 1usize..4, factor in 0.1f64..100.0) {
            let profile = random_profile(seed, k, 3, 3);
            let plan = assign_pilots(k, k, PilotPolicy::Orthogonal).unwrap();
            let base = SystemConfig { tx_power: 2.0, noise_power: 0.5, ..config(50, 100) };
            let scaled = SystemConfig { tx_power: 2.0 * factor, noise_power: 0.5 * factor, ..base.clone() };
            for knowledge in [CovarianceKnowledge::Perfect, CovarianceKnowledge::Estimated] {
                let a = mrc_sinr_closed(&profile, &plan, &base, knowledge).unwrap().gammas();
                let b = mrc_sinr_closed(&profile, &plan, &scaled, knowledge).unwrap().gammas();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!(((x - y) / x).abs() < 1e-10);
                }
                let a = zf_sinr_closed(&profile, &plan, &base, knowledge).unwrap().gamma;
                let b = zf_sinr_closed(&profile, &plan, &scaled, knowledge).unwrap().gamma;
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!(((x - y) / x).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn gamma_tilde_is_hermitian(seed in 0u64..10_000, k in 1usize..5) {
            let profile = random_profile(seed, k, 2, 2);
            let plan = assign_pilots(k, 2, PilotPolicy::RoundRobin).unwrap();
            let cfg = config(40, 80);
            let form = zf_sinr_closed(&profile, &plan, &cfg, CovarianceKnowledge::Estimated);
            if let Ok(form) = form {
                let g = form.gamma_tilde_matrix();
                prop_assert_eq!(g.adjoint(), g);
                for grp in &form.groups {
                    let q = grp.users.len();
                    for a in 0..q {
                        for b in 0..q {
                            prop_assert_eq!(grp.xi[a * q + b], grp.xi[b * q + a]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn doubling_n_lambda_halves_inverse_terms() {
        let p = random_profile(3, 3, 2, 2);
        let plan = assign_pilots(3, 2, PilotPolicy::RoundRobin).unwrap();
        let terms = |nl: usize| {
            let f = mrc_sinr_closed(&p, &plan, &config(40, nl), CovarianceKnowledge::Estimated)
                .unwrap();
            let inf = mrc_sinr_closed(
                &p,
                &plan,
                &config(40, usize::MAX / 4),
                CovarianceKnowledge::Estimated,
            )
            .unwrap();
            (f, inf)
        };
        let (a, inf) = terms(50);
        let (b, _) = terms(100);
        for ((ua, ub), ui) in a.users.iter().zip(&b.users).zip(&inf.users) {
            for ((x, y), z) in ua
                .interference_ex
                .iter()
                .zip(&ub.interference_ex)
                .zip(&ui.interference_ex)
            {
                assert!(((x - z) / (y - z) - 2.0).abs() < 1e-6);
            }
            let r = (ua.noise_factor - ui.noise_factor) / (ub.noise_factor - ui.noise_factor);
            assert!((r - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gamma_converges_in_n_sigma() {
        let p = random_profile(4, 3, 2, 4);
        let plan = assign_pilots(3, 3, PilotPolicy::Orthogonal).unwrap();
        let mn = p.mn();
        let g: Vec<Vec<f64>> = [4, 16, 64]
            .iter()
            .map(|&m| {
                mrc_sinr_closed(
                    &p,
                    &plan,
                    &config(m * mn, 100),
                    CovarianceKnowledge::Estimated,
                )
                .unwrap()
                .gammas()
            })
            .collect();
        for u in 0..3 {
            assert!((g[2][u] - g[1][u]).abs() < (g[1][u] - g[0][u]).abs());
            assert!(g[0][u] < g[1][u] && g[1][u] < g[2][u]);
        }
    }

    #[test]
    fn closed_form_approaches_limit_with_mn() {
        let base = LargeScaleProfile::from_gains(&[vec![1.0, 0.3], vec![0.2, 0.8]], 1).unwrap();
        let plan = assign_pilots(2, 1, PilotPolicy::RoundRobin).unwrap();
        let gaps: Vec<f64> = [4, 16, 64]
            .iter()
            .map(|&n| {
                let p = base.with_antennas(n);
                let cfg = config(8 * p.mn(), 200);
                let closed = mrc_sinr_closed(&p, &plan, &cfg, CovarianceKnowledge::Estimated)
                    .unwrap()
                    .gammas();
                let limit = mrc_sinr_limit(&p, &plan, &cfg).unwrap();
                ((closed[0] - limit[0].gamma) / limit[0].gamma).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
    }

    #[test]
    fn gram_deviations_shrink_with_antennas() {
        let base = LargeScaleProfile::from_gains(
            &[vec![2e-9, 5e-10], vec![3e-10, 1e-9], vec![1e-9, 1e-9]],
            1,
        )
        .unwrap();
        let plan = assign_pilots(3, 2, PilotPolicy::RoundRobin).unwrap();
        let cfg = SystemConfig {
            num_aps: 2,
            antennas_per_ap: 1,
            num_users: 3,
            num_pilots: 2,
            pilot_len: 2,
            tx_power: 1e10,
            noise_power: 1.0,
            ..SystemConfig::default()
        };
        let pts = gram_sequence(
            &cfg,
            &base,
            &plan,
            &[4, 64],
            200,
            crate::linkproc::TrialKeys::new(1, 0),
        )
        .unwrap();
        let target_scale = 2e-9 * 2e-9 / (2e-9 + 1e-9) / 2.0;
        assert!(pts[0].in_group < target_scale, "{pts:?}");
        // Frobenius deviations of an MN-average fall like 1/sqrt(MN).
        for r in [
            pts[1].in_group / pts[0].in_group,
            pts[1].cross_group / pts[0].cross_group,
        ] {
            assert!(r > 0.15 && r < 0.4, "{pts:?}");
        }
    }
}
