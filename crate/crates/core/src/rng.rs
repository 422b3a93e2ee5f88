//! Per-trial random streams.
//!
//! Every trial draws from its own ChaCha8 stream, selected by the trial index,
//! so results do not depend on scheduling or worker count. Channel draws and
//! measurement noise use different keys derived from the same master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CHANNEL_DOMAIN: u64 = 0x6368_616e_6e65_6c00;
const NOISE_DOMAIN: u64 = 0x6e6f_6973_6500_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStreams {
    master_seed: u64,
}

impl TrialStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn keyed(&self, domain: u64, trial: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&domain.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(trial);
        rng
    }

    /// Stream for the angles and fading coefficient of `trial`.
    pub fn channel_rng(&self, trial: u64) -> ChaCha8Rng {
        self.keyed(CHANNEL_DOMAIN, trial)
    }

    /// Stream for the measurement noise of `trial`.
    pub fn noise_rng(&self, trial: u64) -> ChaCha8Rng {
        self.keyed(NOISE_DOMAIN, trial)
    }
}
