//! Seed derivation for the per-trial random streams.
//!
//! Every trial has one 64-bit master seed. The generator is ChaCha20 (RFC 8439
//! block function, 20 rounds) keyed with the seed in little-endian order in
//! the first 8 key bytes and zeros elsewhere. Independent purposes use
//! distinct 64-bit stream ids, so the streams never overlap and a port to
//! another language can reproduce them from the algorithm alone.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// The generator used throughout the simulator.
pub type SimRng = ChaCha20Rng;

/// Purposes that receive their own stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Worker sampling by the supervisor.
    Sampling = 0,
    /// Private coins of honest workers (Freivalds vectors).
    Workers = 1,
    /// The adversary's strategy randomness.
    Adversary = 2,
    /// Instance generation (matrices, values, random graphs).
    Instance = 3,
    /// Hash and signing keys, source-side permutation and quantile choice.
    Source = 4,
    /// Private coins used when precomputing the faithful outputs the adversary may replay.
    Reference = 5,
}

/// Returns the generator for `purpose` under the master `seed`.
pub fn stream(seed: u64, purpose: Stream) -> SimRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(purpose as u64);
    rng
}
