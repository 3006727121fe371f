//! Hierarchical seed derivation.
//!
//! Every seed in a run is derived from the master seed with
//! `derive(parent, index) = splitmix64(parent ^ splitmix64(index + GOLDEN))`:
//! run seeds are `derive(master, r)` and replica seeds `derive(run, k)`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(GOLDEN)))
}
