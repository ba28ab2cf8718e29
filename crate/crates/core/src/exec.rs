//! Chunked execution drivers.
//!
//! Every parallelizable loop in this crate is phrased as "map an index range
//! through a pure closure, then reduce the results in index order". The map
//! runs on rayon when the `parallel` feature is enabled and on a plain
//! iterator otherwise; the reduction is always sequential in index order, so
//! results are bit-identical regardless of feature set, thread count or
//! scheduling.
//!
//! Random work is derived per chunk: chunk `i` seeds a fresh ChaCha stream
//! with `set_stream(i)`, never a shared generator, so the sample sequence a
//! chunk sees does not depend on which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Maps `0..n` through `f`, in parallel when available. The output vector is
/// ordered by index, so any downstream fold is scheduling-independent.
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

/// Sequential twin of [`map_indexed`], kept available in all builds so
/// benchmarks can compare the two paths inside one binary.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// RNG for chunk `i` of a seeded computation: one ChaCha8 stream per chunk.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Splits `total` items into chunks of at most `chunk_len`, returning
/// `(start, len)` pairs covering `0..total` in order.
pub fn chunks(total: u64, chunk_len: u64) -> Vec<(u64, u64)> {
    assert!(chunk_len > 0, "chunk_len must be positive");
    let mut out = Vec::new();
    let mut start = 0;
    while start < total {
        let len = chunk_len.min(total - start);
        out.push((start, len));
        start += len;
    }
    out
}
