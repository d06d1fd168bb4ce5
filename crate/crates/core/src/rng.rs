//! Seeded random streams.
//!
//! Every consumer of randomness draws from a ChaCha8 stream keyed by the run
//! seed. The 256-bit key is expanded from the 64-bit seed with
//! [`SeedableRng::seed_from_u64`] (a PCG32 expansion fixed by `rand_core`), and
//! the 64-bit ChaCha stream id is `(step << 8) | role`. ChaCha output is
//! platform independent, so a `(seed, step, role)` triple always yields the
//! same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Who is consuming a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Init = 0,
    Sampler = 1,
    MlII = 2,
    Acquisition = 3,
    Test = 255,
}

/// Independent substream for `(seed, step, role)`.
pub fn substream(seed: u64, step: u64, role: Role) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((step << 8) | role as u64);
    rng
}

/// A single 64-bit seed drawn from the `(seed, step, role)` substream, for
/// consumers configured by a plain `u64` seed.
pub fn derive_seed(seed: u64, step: u64, role: Role) -> u64 {
    use rand::RngCore;
    substream(seed, step, role).next_u64()
}
