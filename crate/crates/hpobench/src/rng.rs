//! Seeded randomness helpers used everywhere determinism matters.
//!
//! All stochastic components draw from [`ChaCha8Rng`] streams seeded either
//! directly or through [`derive_seed`], so a master seed fully determines
//! every run regardless of platform or standard-library hash internals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Builds the crate-standard RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// FNV-1a over a label, mixing a master seed into a stable derived seed.
///
/// `std::hash` is deliberately avoided: its output may change between
/// compiler releases, which would silently re-seed every recorded run.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in master.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One standard-normal draw via Box-Muller.
pub fn randn<R: Rng>(rng: &mut R) -> f64 {
    // gen_range over (0,1]: 1-gen() keeps the log argument away from zero.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
