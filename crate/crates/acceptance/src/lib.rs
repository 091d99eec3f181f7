//! Shared machinery for the acceptance suite: a small pass/fail reporter,
//! measured group runs and the input generators and oracles the checks
//! compare against.

use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use commkit::{spawn_group, Communicator, TransportConfig, TransportKind, TransportStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one check; `Err` carries a human-readable reason.
pub type Check = Result<(), String>;

/// Fails with `msg` unless `cond` holds.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: String,
    pub outcome: Check,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.elapsed.as_secs_f64();
        match &self.outcome {
            Ok(()) => write!(f, "PASS  {:<40} {secs:>8.2} s", self.name),
            Err(why) => write!(f, "FAIL  {:<40} {secs:>8.2} s  {why}", self.name),
        }
    }
}

/// Runs `check`, turning a panic into a failure.
pub fn evaluate(name: &str, check: impl FnOnce() -> Check) -> Verdict {
    let start = Instant::now();
    let outcome = match panic::catch_unwind(AssertUnwindSafe(check)) {
        Ok(r) => r,
        Err(payload) => Err(panic_message(&*payload)),
    };
    Verdict {
        name: name.to_string(),
        outcome,
        elapsed: start.elapsed(),
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".to_string()
    }
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

/// A value identifying the `i`-th element sent from `src` to `dst`.
pub fn item(src: usize, dst: usize, i: usize) -> u64 {
    ((src as u64) << 40) | ((dst as u64) << 20) | i as u64
}

/// `counts[s][d]` elements from `s` to `d`, each zero with probability
/// `zero_prob` and otherwise uniform in `0..=max`.
pub fn count_matrix(p: usize, max: i32, zero_prob: f64, rng: &mut impl Rng) -> Vec<Vec<i32>> {
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

/// The send buffer of `rank` for the count matrix, grouped by destination.
pub fn alltoallv_input(counts: &[Vec<i32>], rank: usize) -> Vec<u64> {
    (0..counts.len())
        .flat_map(|d| (0..counts[rank][d] as usize).map(move |i| item(rank, d, i)))
        .collect()
}

/// What `rank` must receive from an all-to-all over `counts`, and the
/// matching receive counts.
pub fn alltoallv_oracle(counts: &[Vec<i32>], rank: usize) -> (Vec<u64>, Vec<i32>) {
    let p = counts.len();
    let data = (0..p)
        .flat_map(|s| (0..counts[s][rank] as usize).map(move |i| item(s, rank, i)))
        .collect();
    (data, (0..p).map(|s| counts[s][rank]).collect())
}

/// `p` block sizes summing to `n`, cut at uniformly random positions.
pub fn random_counts(n: usize, p: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..p - 1).map(|_| rng.gen_range(0..=n)).collect();
    cuts.sort_unstable();
    let mut counts = Vec::with_capacity(p);
    let mut prev = 0;
    for c in cuts.into_iter().chain([n]) {
        counts.push(c - prev);
        prev = c;
    }
    counts
}

/// Floats spread over 25 orders of magnitude. Their rounded sum depends on
/// the summation order.
pub fn wild_values(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-8..17)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_transposes_the_input() {
        let counts = vec![vec![0, 2], vec![1, 0]];
        assert_eq!(
            alltoallv_input(&counts, 0),
            vec![item(0, 1, 0), item(0, 1, 1)]
        );
        assert_eq!(
            alltoallv_oracle(&counts, 1),
            (vec![item(0, 1, 0), item(0, 1, 1)], vec![2, 0])
        );
    }

    #[test]
    fn random_counts_cover_n() {
        let mut r = rng(3);
        for p in 1..6 {
            let c = random_counts(17, p, &mut r);
            assert_eq!(c.len(), p);
            assert_eq!(c.iter().sum::<usize>(), 17);
        }
    }

    #[test]
    fn verdicts_catch_panics() {
        let v = evaluate("boom", || panic!("kaput"));
        assert!(!v.passed());
        assert!(v.to_string().contains("kaput"));
        assert!(evaluate("fine", || Ok(())).to_string().starts_with("PASS"));
    }
}
