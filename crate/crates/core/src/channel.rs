//! Block-fading channel draws g_k = Λ_k^{1/2} h_k.

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{complex_normal, CMatrix, CVector};
use crate::scenario::LargeScaleProfile;

/// All users' channels in one coherent block; column k is g_k.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub g: CMatrix,
    pub block_index: u64,
}

impl ChannelRealization {
    pub fn column(&self, user: usize) -> CVector {
        self.g.column(user).into_owned()
    }

    pub fn mn(&self) -> usize {
        self.g.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.g.ncols()
    }
}

/// Draws one block of channels. Entries of column k are independent
/// CN(0, λ_{k,m}) for the antennas of AP m.
pub fn draw_channel<R: Rng + ?Sized>(
    profile: &LargeScaleProfile,
    block_index: u64,
    rng: &mut R,
) -> ChannelRealization {
    let mn = profile.mn();
    let n = profile.antennas_per_ap();
    let k = profile.num_users();
    let mut g = CMatrix::from_element(mn, k, Complex64::new(0.0, 0.0));
    for user in 0..k {
        let gains = profile.user_gains(user);
        let mut col = g.column_mut(user);
        for (i, z) in col.iter_mut().enumerate() {
            *z = complex_normal(rng, 1.0) * gains[i / n].sqrt();
        }
    }
    ChannelRealization { g, block_index }
}
