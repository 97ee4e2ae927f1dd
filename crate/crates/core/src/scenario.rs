//! System configuration, AP/user geometry and large-scale fading.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar parameters of the uplink system.
///
/// Loaded from JSON with exactly these snake_case names; unknown fields are
/// rejected. Missing fields fall back to [`SystemConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// M
    pub num_aps: usize,
    /// N
    pub antennas_per_ap: usize,
    /// K
    pub num_users: usize,
    /// P
    pub num_pilots: usize,
    /// τ, pilot symbols per coherent block
    pub pilot_len: usize,
    /// τ_c, symbols per coherent block
    pub coherence_len: usize,
    /// τ_s, coherent blocks per stationarity window
    pub stationarity_len: usize,
    /// ρ (linear)
    pub tx_power: f64,
    /// σ² (linear)
    pub noise_power: f64,
    /// ζ
    pub pathloss_exponent: f64,
    /// Diameter of the deployment disk, in reference-distance units.
    pub area_diameter: f64,
    pub shadow_std_db: f64,
    /// N_Σ, plain-pilot blocks used for the sample covariance.
    pub n_sigma: usize,
    /// N_Λ, block pairs used for the individual covariances.
    pub n_lambda: usize,
    /// Whether Σ̂ reuses the plain blocks of the Λ̂ pairs.
    pub window_layout: WindowLayout,
    /// Project Λ̂ onto the PSD cone after averaging.
    pub project_lambda: bool,
    pub master_seed: u64,
}

/// Placement of the sample-covariance blocks within a stationarity window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLayout {
    /// Σ̂ uses the plain blocks of N_Σ pairs that follow the N_Λ pairs
    /// used for Λ̂, so the two estimates are independent.
    #[default]
    Disjoint,
    /// Σ̂ uses the plain blocks of the first N_Σ pairs, overlapping Λ̂.
    Shared,
}

impl WindowLayout {
    /// Coherent blocks a window occupies.
    pub fn blocks(&self, n_sigma: usize, n_lambda: usize) -> usize {
        match self {
            Self::Disjoint => 2 * (n_sigma + n_lambda),
            Self::Shared => 2 * n_sigma.max(n_lambda),
        }
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 5,
            antennas_per_ap: 50,
            num_users: 5,
            num_pilots: 5,
            pilot_len: 10,
            coherence_len: 200,
            stationarity_len: 20_000,
            tx_power: 1.0,
            noise_power: 1.0,
            pathloss_exponent: 3.7,
            area_diameter: 1000.0,
            shadow_std_db: 8.0,
            n_sigma: 1000,
            n_lambda: 1000,
            window_layout: WindowLayout::Disjoint,
            project_lambda: true,
            master_seed: 1,
        }
    }
}

impl SystemConfig {
    /// Total receive antennas, M·N.
    pub fn mn(&self) -> usize {
        self.num_aps * self.antennas_per_ap
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

    /// Checks the structural invariants every run needs.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_aps", self.num_aps),
            ("antennas_per_ap", self.antennas_per_ap),
            ("num_users", self.num_users),
            ("num_pilots", self.num_pilots),
            ("pilot_len", self.pilot_len),
            ("coherence_len", self.coherence_len),
            ("stationarity_len", self.stationarity_len),
            ("n_sigma", self.n_sigma),
            ("n_lambda", self.n_lambda),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.pilot_len < self.num_pilots {
            return Err(Error::Config(format!(
                "pilot_len {} < num_pilots {}: not enough orthogonal sequences",
                self.pilot_len, self.num_pilots
            )));
        }
        if self.coherence_len <= self.pilot_len {
            return Err(Error::Config(format!(
                "coherence_len {} must exceed pilot_len {}",
                self.coherence_len, self.pilot_len
            )));
        }
        let blocks = self.window_layout.blocks(self.n_sigma, self.n_lambda);
        if blocks > self.stationarity_len {
            return Err(Error::Config(format!(
                "covariance estimation needs {blocks} coherent blocks but stationarity_len is {}",
                self.stationarity_len
            )));
        }
        for (name, v) in [
            ("tx_power", self.tx_power),
            ("noise_power", self.noise_power),
            ("pathloss_exponent", self.pathloss_exponent),
            ("area_diameter", self.area_diameter),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.shadow_std_db >= 0.0 && self.shadow_std_db.is_finite()) {
            return Err(Error::Config("shadow_std_db must be nonnegative".into()));
        }
        Ok(())
    }

    /// Extra requirement for simulating with estimated covariances: the
    /// sample covariance must be invertible, so N_Σ ≥ MN.
    pub fn validate_for_estimation(&self) -> Result<()> {
        self.validate()?;
        if self.n_sigma < self.mn() {
            return Err(Error::Config(format!(
                "n_sigma {} < MN {}: the sample covariance would be singular",
                self.n_sigma,
                self.mn()
            )));
        }
        Ok(())
    }

    /// Extra requirement of the closed-form expressions: N_Σ > MN + 1.
    pub fn validate_for_theory(&self) -> Result<()> {
        self.validate()?;
        if self.n_sigma <= self.mn() + 1 {
            return Err(Error::Config(format!(
                "closed forms need n_sigma > MN + 1 (n_sigma = {}, MN = {})",
                self.n_sigma,
                self.mn()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Large-scale gains λ_{k,m} for every (user, AP) pair.
///
/// The per-user covariance Λ_k = diag(λ_{k,1..M}) ⊗ I_N is never stored
/// densely; [`LargeScaleProfile::lambda_diag`] expands it to its length-MN
/// diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleProfile {
    num_users: usize,
    num_aps: usize,
    antennas_per_ap: usize,
    /// Row-major K×M.
    gains: Vec<f64>,
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
}

impl LargeScaleProfile {
    /// Builds a profile directly from a K×M gain table (rows are users).
    pub fn from_gains(gains: &[Vec<f64>], antennas_per_ap: usize) -> Result<Self> {
        let num_users = gains.len();
        let num_aps = gains.first().map_or(0, Vec::len);
        if num_users == 0 || num_aps == 0 || antennas_per_ap == 0 {
            return Err(Error::Config(
                "gain table and antennas_per_ap must be nonempty".into(),
            ));
        }
        if gains.iter().any(|row| row.len() != num_aps) {
            return Err(Error::Config("ragged gain table".into()));
        }
        if gains.iter().flatten().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Config(
                "every large-scale gain must be positive".into(),
            ));
        }
        Ok(Self {
            num_users,
            num_aps,
            antennas_per_ap,
            gains: gains.iter().flatten().copied().collect(),
            ap_positions: Vec::new(),
            user_positions: Vec::new(),
        })
    }

    /// Same per-AP gains with a different antenna count per AP.
    pub fn with_antennas(&self, antennas_per_ap: usize) -> Self {
        Self {
            antennas_per_ap,
            ..self.clone()
        }
    }

    /// Multiplies every gain by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gains: self.gains.iter().map(|g| g * factor).collect(),
            ..self.clone()
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn antennas_per_ap(&self) -> usize {
        self.antennas_per_ap
    }

    pub fn mn(&self) -> usize {
        self.num_aps * self.antennas_per_ap
    }

    pub fn gain(&self, user: usize, ap: usize) -> f64 {
        self.gains[user * self.num_aps + ap]
    }

    pub fn user_gains(&self, user: usize) -> &[f64] {
        &self.gains[user * self.num_aps..(user + 1) * self.num_aps]
    }

    /// Diagonal of Λ_k, AP-major: entries `m·N .. (m+1)·N` equal λ_{k,m}.
    pub fn lambda_diag(&self, user: usize) -> Vec<f64> {
        self.user_gains(user)
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g, self.antennas_per_ap))
            .collect()
    }

    /// Strongest-AP gain of each user.
    pub fn strongest_gains(&self) -> Vec<f64> {
        (0..self.num_users)
            .map(|k| self.user_gains(k).iter().copied().fold(0.0, f64::max))
            .collect()
    }

    /// Transmit power giving the median user a strongest-AP receive SNR of
    /// `snr_db` at noise power `noise_power`.
    pub fn tx_power_for_median_snr(&self, snr_db: f64, noise_power: f64) -> f64 {
        let mut best = self.strongest_gains();
        best.sort_by(|a, b| a.total_cmp(b));
        let n = best.len();
        let median = if n % 2 == 1 {
            best[n / 2]
        } else {
            0.5 * (best[n / 2 - 1] + best[n / 2])
        };
        10f64.powf(snr_db / 10.0) * noise_power / median
    }
}

/// Draws `count` points uniformly (by area) in the disk of the given
/// diameter centred at the origin.
pub fn place_uniform_disk<R: Rng + ?Sized>(count: usize, diameter: f64, rng: &mut R) -> Vec<Point> {
    let radius = 0.5 * diameter;
    (0..count)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            Point::new(r * phi.cos(), r * phi.sin())
        })
        .collect()
}

/// λ = max(d, 1)^(−ζ) · 10^(shadow_db / 10).
pub fn large_scale_gain(distance: f64, shadow_db: f64, zeta: f64) -> f64 {
    distance.max(1.0).powf(-zeta) * 10f64.powf(shadow_db / 10.0)
}

/// Gains for given positions, with independent log-normal shadowing.
pub fn profile_from_positions<R: Rng + ?Sized>(
    ap_positions: Vec<Point>,
    user_positions: Vec<Point>,
    antennas_per_ap: usize,
    zeta: f64,
    shadow_std_db: f64,
    rng: &mut R,
) -> LargeScaleProfile {
    let shadow = Normal::new(0.0, shadow_std_db).expect("shadow std is finite and nonnegative");
    let mut gains = Vec::with_capacity(user_positions.len() * ap_positions.len());
    for u in &user_positions {
        for a in &ap_positions {
            let s_db = if shadow_std_db > 0.0 {
                shadow.sample(rng)
            } else {
                0.0
            };
            gains.push(large_scale_gain(u.distance(a), s_db, zeta));
        }
    }
    LargeScaleProfile {
        num_users: user_positions.len(),
        num_aps: ap_positions.len(),
        antennas_per_ap,
        gains,
        ap_positions,
        user_positions,
    }
}

/// Draws AP and user positions, then every gain.
pub fn build_profile<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> LargeScaleProfile {
    let aps = place_uniform_disk(config.num_aps, config.area_diameter, rng);
    let users = place_uniform_disk(config.num_users, config.area_diameter, rng);
    profile_from_positions(
        aps,
        users,
        config.antennas_per_ap,
        config.pathloss_exponent,
        config.shadow_std_db,
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn empty_disk() {
        assert!(place_uniform_disk(0, 1000.0, &mut rng::stream(&[0])).is_empty());
    }

    #[test]
    fn disk_mean_radius() {
        let pts = place_uniform_disk(10_000, 1000.0, &mut rng::stream(&[3]));
        assert!(pts.iter().all(|p| p.radius() <= 500.0));
        let mean = pts.iter().map(Point::radius).sum::<f64>() / pts.len() as f64;
        assert!(
            (mean / (1000.0 / 3.0) - 1.0).abs() < 0.03,
            "mean radius {mean}"
        );
    }

    #[test]
    fn disk_is_deterministic() {
        let a = place_uniform_disk(50, 10.0, &mut rng::stream(&[9]));
        let b = place_uniform_disk(50, 10.0, &mut rng::stream(&[9]));
        assert_eq!(a, b);
    }

    #[test]
    fn disk_passes_annulus_chi_square() {
        // 8 equal-area annuli; chi-square critical value at 7 dof, p = 0.001.
        let n = 100_000;
        let pts = place_uniform_disk(n, 2.0, &mut rng::stream(&[4]));
        let mut counts = [0usize; 8];
        for p in &pts {
            let bin = ((p.radius() * p.radius()) * 8.0).floor() as usize;
            counts[bin.min(7)] += 1;
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 24.322, "chi2 = {chi2}");
    }

    #[test]
    fn gain_examples() {
        assert_eq!(large_scale_gain(1.0, 0.0, 3.7), 1.0);
        assert!((large_scale_gain(2.0, 0.0, 3.7) - 2f64.powf(-3.7)).abs() < 1e-15);
        assert!((large_scale_gain(2.0, 0.0, 3.7) - 0.07695).abs() < 1e-5);
        assert_eq!(large_scale_gain(0.5, 0.0, 3.7), 1.0);
    }

    #[test]
    fn gain_monotonicity() {
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let d = 1.0 + i as f64 * 0.37;
            let g = large_scale_gain(d, 0.0, 3.7);
            assert!(g <= prev);
            prev = g;
        }
        assert!(large_scale_gain(5.0, 1.0, 3.7) > large_scale_gain(5.0, 0.5, 3.7));
    }

    #[test]
    fn unit_distance_profile() {
        let p = profile_from_positions(
            vec![Point::new(0.0, 0.0)],
            vec![Point::new(1.0, 0.0)],
            4,
            3.7,
            0.0,
            &mut rng::stream(&[0]),
        );
        assert_eq!(p.gain(0, 0), 1.0);
        assert_eq!(p.lambda_diag(0), vec![1.0; 4]);
    }

    #[test]
    fn full_size_profile_shape_and_determinism() {
        let cfg = SystemConfig::default();
        let a = build_profile(&cfg, &mut rng::stream(&[cfg.master_seed]));
        let b = build_profile(&cfg, &mut rng::stream(&[cfg.master_seed]));
        assert_eq!(a.num_users(), 5);
        assert_eq!(a.num_aps(), 5);
        assert!((0..5).all(|k| a.user_gains(k).iter().all(|&g| g > 0.0)));
        assert_eq!(a, b);
    }

    #[test]
    fn config_json_rejects_unknown_fields() {
        assert!(SystemConfig::from_json_str(r#"{"num_aps": 2, "num_apz": 3}"#).is_err());
        let c = SystemConfig::from_json_str(r#"{"num_aps": 2, "n_sigma": 40}"#).unwrap();
        assert_eq!(c.num_aps, 2);
        assert_eq!(c.n_sigma, 40);
        assert_eq!(c.antennas_per_ap, 50);
    }

    #[test]
    fn config_invariants() {
        let ok = SystemConfig::default();
        ok.validate().unwrap();
        ok.validate_for_theory().unwrap();
        let bad = SystemConfig {
            pilot_len: 3,
            num_pilots: 4,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            coherence_len: 10,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            n_sigma: 10_001,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let big = SystemConfig {
            n_sigma: 6000,
            n_lambda: 6000,
            ..ok.clone()
        };
        assert!(big.validate().is_err());
        SystemConfig {
            window_layout: WindowLayout::Shared,
            ..big
        }
        .validate()
        .unwrap();
        let bad = SystemConfig {
            n_sigma: 251,
            ..ok.clone()
        };
        assert!(bad.validate_for_theory().is_err());
        let bad = SystemConfig {
            noise_power: 0.0,
            ..ok
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn median_snr_calibration() {
        let p =
            LargeScaleProfile::from_gains(&[vec![1.0, 0.1], vec![0.5, 2.0], vec![0.01, 0.02]], 2)
                .unwrap();
        let rho = p.tx_power_for_median_snr(10.0, 1.0);
        // strongest gains: 1.0, 2.0, 0.02 -> median 1.0
        assert!((rho - 10.0).abs() < 1e-12);
    }
}
