use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifier recorded in run manifests. Changing the stream or the
/// float conversion below must change this string.
pub const RNG_ALGORITHM: &str = "chacha8(rand_chacha 0.3, seed_from_u64) u64>>11 * 2^-53 * 2pi";

/// Attach angles `theta_1..theta_n`, i.i.d. uniform on `[0, 2 pi)`.
///
/// Entry `k` is the `k`-th draw of one ChaCha8 stream keyed by `seed`, so the
/// first `n` angles do not depend on how many are requested.
pub fn sample_angles(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            2.0 * PI * u
        })
        .collect()
}
