//! Sub-seed derivation.
//!
//! Every independent random stream (a generation chunk, a phase-noise
//! calibration block, a drift walk) gets its own seed
//! `splitmix64(parent ^ splitmix64(index + GOLDEN))`. Derived seeds depend
//! only on the parent and the index, so chunks can be generated in any
//! order and still reproduce the same events.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One step of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(GOLDEN)))
}

/// Stream labels used with [`derive_seed`].
pub(crate) mod stream {
    pub const PHASE_SIGNAL: u64 = 0x5349_474e; // "SIGN"
    pub const PHASE_IDLER: u64 = 0x4944_4c52; // "IDLR"
    pub const NOISE: u64 = 0x4e4f_4953; // "NOIS"
}
