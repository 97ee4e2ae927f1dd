//! Pilot assignment, the random phase schedule and despread pilot
//! observations.
//!
//! Pilot sequences are not simulated symbol by symbol: since the P
//! sequences are orthonormal, correlating with the conjugate pilot leaves
//! exactly `y_p = √ρ Σ_{i∈U_p} g_i + n_p`, which is what
//! [`receive_pilot`] produces.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{complex_normal, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPolicy {
    /// User k gets pilot k; needs P ≥ K.
    Orthogonal,
    /// User k gets pilot k mod P.
    RoundRobin,
}

impl PilotPolicy {
    /// Orthogonal when there are enough pilots, round-robin otherwise.
    pub fn auto(num_users: usize, num_pilots: usize) -> Self {
        if num_pilots >= num_users {
            Self::Orthogonal
        } else {
            Self::RoundRobin
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotPlan {
    /// Pilot index of each user.
    pub assignment: Vec<usize>,
    /// Users of each pilot, ascending.
    pub groups: Vec<Vec<usize>>,
}

impl PilotPlan {
    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_pilots(&self) -> usize {
        self.groups.len()
    }

    pub fn pilot_of(&self, user: usize) -> usize {
        self.assignment[user]
    }

    /// Users sharing `user`'s pilot, including `user`.
    pub fn group_of(&self, user: usize) -> &[usize] {
        &self.groups[self.assignment[user]]
    }

    /// Position of `user` within its (ascending) group.
    pub fn position_in_group(&self, user: usize) -> usize {
        self.group_of(user)
            .iter()
            .position(|&u| u == user)
            .expect("user belongs to its own group")
    }
}

pub fn assign_pilots(
    num_users: usize,
    num_pilots: usize,
    policy: PilotPolicy,
) -> Result<PilotPlan> {
    if num_users == 0 || num_pilots == 0 {
        return Err(Error::Config("need at least one user and one pilot".into()));
    }
    if policy == PilotPolicy::Orthogonal && num_pilots < num_users {
        return Err(Error::Config(format!(
            "orthogonal pilots need P ≥ K (P = {num_pilots}, K = {num_users})"
        )));
    }
    let assignment: Vec<usize> = (0..num_users).map(|k| k % num_pilots).collect();
    let mut groups = vec![Vec::new(); num_pilots];
    for (k, &p) in assignment.iter().enumerate() {
        groups[p].push(k);
    }
    Ok(PilotPlan { assignment, groups })
}

/// θ_{k,2n}: the phase user k applies in the shifted block of pair n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    num_users: usize,
    num_pairs: usize,
    /// Pair-major: `theta[n * K + k]`.
    theta: Vec<f64>,
}

impl PhaseSchedule {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }

    pub fn theta(&self, user: usize, pair: usize) -> f64 {
        self.theta[pair * self.num_users + user]
    }

    /// Phases of all users in one pair.
    pub fn pair(&self, pair: usize) -> &[f64] {
        &self.theta[pair * self.num_users..(pair + 1) * self.num_users]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta.iter().copied()
    }
}

/// I.i.d. uniform phases on [0, 2π). Draws are pair-major, so a longer
/// schedule from the same stream extends a shorter one.
pub fn phase_schedule<R: Rng + ?Sized>(
    num_users: usize,
    num_pairs: usize,
    rng: &mut R,
) -> PhaseSchedule {
    let theta = (0..num_users * num_pairs)
        .map(|_| TAU * rng.random::<f64>())
        .collect();
    PhaseSchedule {
        num_users,
        num_pairs,
        theta,
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PilotMode<'a> {
    Plain,
    /// One phase per group member, in group order.
    Shifted(&'a [f64]),
}

/// Despread pilot observation of one group:
/// plain `√ρ Σ g_i + n`, shifted `√ρ Σ g_i e^{jθ_i} + n`, with n ~ CN(0, σ²I).
pub fn receive_pilot<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    group: &[usize],
    mode: PilotMode<'_>,
    rho: f64,
    sigma2: f64,
    rng: &mut R,
) -> CVector {
    let mut y = CVector::zeros(channel.mn());
    receive_pilot_into(&mut y, channel, group, mode, rho, sigma2, rng);
    y
}

/// [`receive_pilot`] writing into an existing buffer.
pub fn receive_pilot_into<R: Rng + ?Sized>(
    y: &mut CVector,
    channel: &ChannelRealization,
    group: &[usize],
    mode: PilotMode<'_>,
    rho: f64,
    sigma2: f64,
    rng: &mut R,
) {
    let amp = rho.sqrt();
    for z in y.iter_mut() {
        *z = complex_normal(rng, sigma2);
    }
    for (q, &user) in group.iter().enumerate() {
        let coef = match mode {
            PilotMode::Plain => Complex64::new(amp, 0.0),
            PilotMode::Shifted(phases) => {
                assert_eq!(phases.len(), group.len(), "one phase per group member");
                Complex64::from_polar(amp, phases[q])
            }
        };
        let g = channel.g.column(user);
        for (yi, gi) in y.iter_mut().zip(g.iter()) {
            *yi += gi * coef;
        }
    }
}

/// Removes user k's phase shift: returns y · e^{−jθ_k}.
pub fn derotate(y_shifted: &CVector, theta_k: f64) -> CVector {
    y_shifted * Complex64::from_polar(1.0, -theta_k)
}
