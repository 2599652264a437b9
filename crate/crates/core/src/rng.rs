//! Seedable random streams.
//!
//! Every consumer of randomness derives its own stream from the run seed and
//! a fixed label (plus an optional index such as the epoch number). Streams
//! are `Xoshiro256PlusPlus` generators seeded from a SplitMix64 mix of the
//! seed, a 64-bit FNV-1a hash of the label and the index, so the same run
//! produces the same numbers on every machine, and adding a new consumer
//! never shifts an existing stream.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// Stream labels used by the library.
pub mod streams {
    pub const INIT: &str = "init";
    pub const DATA: &str = "data";
    pub const SAMPLE: &str = "sample";
    pub const VQ: &str = "vq";
    pub const SYNTH: &str = "synth";
    pub const DROPOUT: &str = "dropout";
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> Rng {
    indexed_stream(seed, label, 0)
}

/// Independent stream for `(label, index)` under `seed`.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> Rng {
    let mixed = splitmix64(seed ^ splitmix64(fnv1a64(label.as_bytes()) ^ splitmix64(index)));
    Rng::seed_from_u64(mixed)
}
