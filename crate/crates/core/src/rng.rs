//! Seeded random streams. Each consumer gets its own PCG stream keyed by
//! `(seed, index)`, so results do not depend on scheduling.

use rand_pcg::Pcg64;

/// Stream indices at or above this value are reserved for generators that
/// are not tied to a particle slot.
pub const RESERVED: u64 = 1 << 62;

/// Stream of the initial-configuration sampler.
pub const PPP_STREAM: u64 = RESERVED;

pub fn substream(seed: u64, index: u64) -> Pcg64 {
    // spread the seed over the full 128-bit state
    let state = (seed as u128).wrapping_mul(0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c835) ^ 0x2545_f491_4f6c_dd1d;
    Pcg64::new(state, index as u128)
}
