//! Named random sub-streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream names used across the toolkit.
pub const SIM: &str = "sim";
pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const DROPOUT: &str = "dropout";
pub const SHUFFLE: &str = "shuffle";
pub const SAMPLER: &str = "sampler";

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Independent ChaCha stream for `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}

/// Derives a plain seed for `name`, for APIs that take `u64`.
pub fn derive(seed: u64, name: &str) -> u64 {
    use rand::Rng;
    stream(seed, name).random()
}
