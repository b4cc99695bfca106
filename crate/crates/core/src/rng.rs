//! Counter-style seed derivation: every random stream is identified by a
//! master seed and a derivation path, independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream at `path` under `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut s = splitmix(master);
    for p in path {
        s = splitmix(s ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    s
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Domain tags used as the first element of derivation paths.
pub mod tag {
    pub const NOISE: u64 = 1;
    pub const WEIGHT_MC: u64 = 2;
    pub const AUDIT: u64 = 3;
    pub const INITIAL: u64 = 4;
}
