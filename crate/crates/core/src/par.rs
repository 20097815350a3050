//! Seeded per-task RNG streams and an order-preserving parallel map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream `stream` of the master seed. Streams never overlap, so
/// results do not depend on how tasks are scheduled.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for realization `realization` of sweep point `point`.
pub fn task_stream(point: usize, realization: usize) -> u64 {
    ((point as u64) << 32) | realization as u64
}

/// `(0..n).map(f)` evaluated on the worker pool when the `parallel` feature is
/// on; output order always follows the index.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
