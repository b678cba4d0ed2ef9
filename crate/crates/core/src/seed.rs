//! Seed derivation.
//!
//! A single master seed is fanned out into independent sub-seeds so that
//! changing, say, the number of shuffles never perturbs the initialization.

/// Stream identifiers used by the pipeline.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the sub-seed for `stream` from `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    mix(master
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(mix(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))))
}

/// Derives a seed for the `index`-th draw within a stream (e.g. one dropout
/// mask per optimizer step).
pub fn derive_indexed(master: u64, stream: u64, index: u64) -> u64 {
    mix(derive(master, stream) ^ mix(index.wrapping_add(1)))
}
