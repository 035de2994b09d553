//! Shared input generators for the benchmarks.

use pairlab_core::TimeTagStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` tags of a Poisson process with `rate_per_ps`, at 1 ps resolution.
pub fn poisson_stream(channel: u8, n: usize, rate_per_ps: f64, seed: u64) -> TimeTagStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    let ts = (0..n)
        .map(|_| {
            t += -(1.0 - rng.random::<f64>()).ln() / rate_per_ps;
            t as u64
        })
        .collect();
    TimeTagStream::new(channel, 1, ts).expect("monotone")
}
