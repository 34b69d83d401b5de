//! Deterministic sub-stream derivation.
//!
//! Every random draw in a sweep comes from a ChaCha stream whose seed is a
//! pure function of the master seed and the coordinates of the draw (SNR
//! index, trial index, ...). Results are therefore independent of how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random source used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Stream domains, so that e.g. trial 7 and channel block 7 never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Trial = 0x7472_6961_6c00_0001,
    Channel = 0x6368_616e_6e00_0002,
    Alpha = 0x616c_7068_6100_0003,
    Aux = 0x6175_7800_0000_0004,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the master seed with an ordered list of coordinates.
pub fn derive_seed(master: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ stream as u64);
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c));
    }
    h
}

/// Builds the random source for the given coordinates.
pub fn rng_for(master: u64, stream: Stream, coords: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, coords))
}
