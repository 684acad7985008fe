//! Shared fixtures for the criterion benches.

use volmoments::{synth, BitDepth, Dims, SynthKind, Volume};

/// Seed used for every benchmark volume.
pub const SEED: u64 = 0x5eed;

/// 8-bit random cube of side `n`.
pub fn random_cube(n: usize) -> Volume {
    random_volume(Dims::cube(n))
}

/// 8-bit random volume of the given shape.
pub fn random_volume(dims: Dims) -> Volume {
    synth(
        &SynthKind::Random {
            depth: BitDepth::U8,
        },
        dims,
        SEED,
    )
    .expect("benchmark volume")
}
