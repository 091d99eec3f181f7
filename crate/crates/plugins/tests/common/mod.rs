#![allow(dead_code)]

use commkit::{
    run_world, spawn_group, Communicator, TransportConfig, TransportKind, TransportStats,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run<R: Send>(p: usize, kind: TransportKind, f: impl Fn(Communicator) -> R + Sync) -> Vec<R> {
    run_world(p, &TransportConfig::of_kind(kind), f).expect("group setup")
}

/// Per-rank results and transport counters of one run on a fresh group.
pub fn measured<R: Send>(
    p: usize,
    kind: TransportKind,
    f: impl Fn(Communicator) -> R + Sync,
) -> (Vec<R>, Vec<TransportStats>) {
    let group = spawn_group(p, &TransportConfig::of_kind(kind)).expect("group setup");
    group.reset_stats();
    let out = group.run(f);
    (out, group.stats())
}

pub fn item(src: usize, dst: usize, i: usize) -> u64 {
    ((src as u64) << 40) | ((dst as u64) << 20) | i as u64
}

/// `counts[s][d]` elements from `s` to `d`.
pub fn count_matrix(p: usize, max: i32, zero_prob: f64, seed: u64) -> Vec<Vec<i32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..p)
        .map(|_| {
            (0..p)
                .map(|_| {
                    if rng.gen_bool(zero_prob) {
                        0
                    } else {
                        rng.gen_range(0..=max)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn alltoallv_input(counts: &[Vec<i32>], rank: usize) -> Vec<u64> {
    (0..counts.len())
        .flat_map(|d| (0..counts[rank][d] as usize).map(move |i| item(rank, d, i)))
        .collect()
}
