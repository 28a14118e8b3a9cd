//! Named random streams.
//!
//! Every random draw comes from a ChaCha8 generator keyed by
//! `(seed, purpose, epoch, n2, n1)`. The key is hashed with SplitMix64 into a
//! 256-bit ChaCha seed, so streams are independent of each other and adding
//! paths or particles never shifts the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant enters the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    CommonNoise = 1,
    IdioNoise = 2,
    InitialState = 3,
    NetworkInit = 4,
    Minibatch = 5,
    Shuffle = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, epoch: u64, n2: u64, n1: u64) -> StreamRng {
    let mut h = splitmix(seed);
    for part in [purpose as u64, epoch, n2, n1] {
        h = splitmix(h ^ part);
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
