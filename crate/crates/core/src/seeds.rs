//! Deterministic seed derivation.
//!
//! Every randomized stage of the pipeline draws its seed from a single master
//! seed plus a fixed per-stage offset, so that one `--seed` flag pins an
//! entire run. Derivation is a SplitMix64 finalizer over the XOR of master
//! and offset; distinct offsets give statistically independent streams.

/// Fixed per-stage offsets. Values are arbitrary but frozen: changing them
/// changes every derived artifact.
pub mod stage {
    pub const SIGNAL: u64 = 0x01;
    pub const ICA: u64 = 0x02;
    pub const TRACK: u64 = 0x03;
    pub const PILOT: u64 = 0x04;
    pub const INIT: u64 = 0x05;
    pub const SHUFFLE: u64 = 0x06;
    pub const VIDEO: u64 = 0x07;
    pub const RANK: u64 = 0x08;
    pub const RACE: u64 = 0x09;
}

/// Derives a stage seed from the master seed.
pub fn derive(master: u64, offset: u64) -> u64 {
    splitmix64(master ^ offset.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Derives a sub-seed for the `index`-th unit inside a stage (race number,
/// fold/seed pair, video number, ...).
pub fn derive_indexed(master: u64, offset: u64, index: u64) -> u64 {
    splitmix64(derive(master, offset).wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
