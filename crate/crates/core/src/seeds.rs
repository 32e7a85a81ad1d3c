//! Seed derivation.
//!
//! One user-facing seed drives every random decision in the pipeline. Each
//! consumer derives its own stream with [`hash64`], a splitmix64 finalizer
//! over `seed ^ (key * GOLDEN)`. The constants are part of the on-disk
//! format contract: changing them changes every derived artifact.

/// Multiplier used to spread the key before mixing (2^64 / golden ratio).
pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, key)`.
pub fn hash64(seed: u64, key: u64) -> u64 {
    splitmix64(seed ^ key.wrapping_mul(GOLDEN))
}

/// Fixed keys for the pipeline stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Heavy-edge-matching visit order (per-level seeds derive from this).
    Coarsen = 1,
    /// Model parameter initialization.
    Init = 2,
    /// Stratified train/val/test split.
    Split = 3,
    /// Dropout masks (further derived per epoch and batch).
    Dropout = 4,
    /// Synthetic data generation.
    Synth = 5,
    /// Per-epoch shuffling of the training partition.
    Shuffle = 6,
}

/// Seed for one pipeline stage.
pub fn purpose_seed(seed: u64, purpose: Purpose) -> u64 {
    hash64(seed, purpose as u64)
}
