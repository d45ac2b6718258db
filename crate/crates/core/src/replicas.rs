//! Seeded random streams and the replica harness.
//!
//! Stream `k` of seed `s` is `ChaCha8Rng::seed_from_u64(s)` switched to
//! ChaCha stream id `k`. Experiments that run several groups of replicas
//! (one group per particle count, say) use [`stream_id`] to pack the group
//! into the high 32 bits and the replica index into the low 32 bits.
//!
//! Replicas run on a dedicated rayon pool and results come back in replica
//! order, so any reduction over them is independent of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for bootstrap resampling.
pub const BOOTSTRAP_STREAM: u64 = u64::MAX;

pub fn derive_rng_stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn stream_id(group: u32, replica: u32) -> u64 {
    (u64::from(group) << 32) | u64::from(replica)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaPlan {
    pub seed: u64,
    /// Worker threads; 1 runs replicas on the calling thread.
    pub workers: usize,
}

impl ReplicaPlan {
    pub fn new(seed: u64, workers: usize) -> Self {
        ReplicaPlan { seed, workers: workers.max(1) }
    }

    pub fn stream(&self, group: u32, replica: u32) -> StreamRng {
        derive_rng_stream(self.seed, stream_id(group, replica))
    }

    /// Runs `count` replicas of `job`, each on its own stream, and returns
    /// their results in replica order. The first error by replica index wins.
    pub fn run<T, E, F>(&self, group: u32, count: usize, job: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize, &mut StreamRng) -> Result<T, E> + Sync,
    {
        let one = |r: usize| {
            let mut rng = self.stream(group, r as u32);
            job(r, &mut rng)
        };
        let results: Vec<Result<T, E>> = if self.workers <= 1 {
            (0..count).map(one).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .expect("failed to start replica worker pool");
            pool.install(|| (0..count).into_par_iter().map(one).collect())
        };
        results.into_iter().collect()
    }
}
