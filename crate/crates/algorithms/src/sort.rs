use std::cmp::Ordering;

use commkit::{Communicator, Plain, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Samples drawn per rank when choosing splitters.
pub const DEFAULT_OVERSAMPLING: usize = 16;

/// Sorts a distributed sequence: afterwards every rank's block is sorted and
/// the blocks of ranks `0..p` concatenate to the sorted union of all inputs.
///
/// Each rank draws `oversampling` samples from its input (with replacement,
/// from a generator seeded by `seed` on a stream per rank). The gathered,
/// sorted samples yield `p - 1` splitters at positions `(i + 1) * s / p`.
/// An element goes to the bucket of the first splitter not less than it, so
/// equal keys land on the same rank.
///
/// # Panics
/// If `oversampling` is zero.
pub fn sample_sort<T: Plain + Ord>(
    comm: &Communicator,
    data: Vec<T>,
    oversampling: usize,
    seed: u64,
) -> Result<Vec<T>> {
    sample_sort_by(comm, data, T::cmp, oversampling, seed)
}

/// [`sample_sort`] with a custom total order.
pub fn sample_sort_by<T: Plain>(
    comm: &Communicator,
    mut data: Vec<T>,
    cmp: impl Fn(&T, &T) -> Ordering,
    oversampling: usize,
    seed: u64,
) -> Result<Vec<T>> {
    assert!(oversampling >= 1, "oversampling must be at least 1");
    let (rank, p) = comm.rank_and_size();
    data.sort_by(&cmp);
    if p == 1 {
        return Ok(data);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rank as u64);
    let local_samples: Vec<T> = if data.is_empty() {
        Vec::new()
    } else {
        (0..oversampling)
            .map(|_| data[rng.gen_range(0..data.len())])
            .collect()
    };
    let mut samples = comm
        .allgatherv()
        .send_buf(&local_samples)
        .call()?
        .into_recv_buf();
    if samples.is_empty() {
        return Ok(data);
    }
    samples.sort_by(&cmp);
    let splitters: Vec<T> = (0..p - 1)
        .map(|i| samples[(i + 1) * samples.len() / p])
        .collect();

    let mut send_counts = vec![0i32; p];
    for e in &data {
        let bucket = splitters.partition_point(|s| cmp(s, e) == Ordering::Less);
        send_counts[bucket] += 1;
    }
    let mut out = comm
        .alltoallv()
        .send_buf(&data)
        .send_counts(&send_counts)
        .call()?
        .into_recv_buf();
    out.sort_by(&cmp);
    Ok(out)
}
