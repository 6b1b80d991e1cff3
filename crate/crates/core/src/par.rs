//! Seeded substreams and the chunked worker pool. Results depend only on
//! the seed and the chunk layout, never on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per chunk; fixed so chunk boundaries never depend on workers.
pub const CHUNK: usize = 4096;

/// Generator for chunk `chunk` of the run seeded with `seed`.
pub fn stream(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Run `f(chunk_index, chunk_len, rng)` over ceil(total / chunk) chunks on
/// `workers` threads (0 = all cores) and return results in chunk order.
pub fn chunked<T, F>(total: usize, chunk: usize, seed: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize, &mut ChaCha8Rng) -> T + Sync,
{
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let len = chunk.min(total - c * chunk);
                f(c, len, &mut stream(seed, c as u64))
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn worker_invariance() {
        let run = |w| {
            chunked(10_000, 333, 42, w, |_, len, rng| (0..len).map(|_| rng.random::<u64>()).fold(0u64, |a, b| a.wrapping_add(b))).unwrap()
        };
        assert_eq!(run(1), run(4));
        assert_eq!(run(1).len(), 31);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream(1, 0).random();
        let b: u64 = stream(1, 1).random();
        assert_ne!(a, b);
    }
}
