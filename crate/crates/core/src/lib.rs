//! Free-flyer simulation, PPO wrench policy, PD baseline and flight-sequence
//! replay.

pub mod actuation;
pub mod baseline;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod env;
pub mod eval;
pub mod learn;
pub mod math3d;
pub mod mission;

/// Thread pool with `n` workers; `0` means one per available core.
pub fn worker_pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
}
