//! Seeded random streams.
//!
//! Every consumer draws from a ChaCha8 stream keyed by the user seed, with
//! the 64-bit stream id split into a purpose tag (high 16 bits) and an
//! index (low 48 bits). Chain `i` of a run and dataset `i` of a sweep
//! therefore never share a stream, whatever the scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Chain = 0,
    Truth = 1,
    Noise = 2,
    Sweep = 3,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
