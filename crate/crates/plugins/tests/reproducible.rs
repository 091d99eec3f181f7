mod common;

use commkit::{Distribution, Error, ReduceOp, TransportKind};
use commkit_plugins::{canonical_tree_reduce, reproducible_reduce};
use common::{measured, run};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Values spanning many magnitudes; their rounded sum depends on the order.
fn wild_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(-1.0..1.0);
            m * 10f64.powi(rng.gen_range(-8..17))
        })
        .collect()
}

fn random_counts(n: usize, p: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts: Vec<usize> = (0..p - 1).map(|_| rng.gen_range(0..=n)).collect();
    cuts.sort();
    let mut counts = Vec::with_capacity(p);
    let mut prev = 0;
    for c in cuts.into_iter().chain([n]) {
        counts.push(c - prev);
        prev = c;
    }
    counts
}

/// The result at rank 0 and the total payload envelopes sent.
fn distributed(values: &[f64], counts: &[usize], kind: TransportKind) -> (f64, u64) {
    let dist = Distribution::from_counts(counts.to_vec()).unwrap();
    let (out, stats) = measured(counts.len(), kind, |c| {
        let block = &values[dist.range(c.rank())];
        reproducible_reduce(&c, block, &dist, &ReduceOp::sum()).unwrap()
    });
    for r in &out[1..] {
        assert!(r.is_none());
    }
    (
        out[0].expect("result on rank 0"),
        stats.iter().map(|s| s.messages_sent).sum(),
    )
}

#[test]
fn single_rank_matches_canonical() {
    let v = wild_values(100, 1);
    let canonical = canonical_tree_reduce(&v, &ReduceOp::sum()).unwrap();
    let (got, messages) = distributed(&v, &[100], TransportKind::InProc);
    assert_eq!(got.to_bits(), canonical.to_bits());
    assert_eq!(messages, 0);
}

#[test]
fn seven_elements_over_three_ranks() {
    let v = wild_values(7, 7);
    let expected = ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + v[6]);
    assert_eq!(
        canonical_tree_reduce(&v, &ReduceOp::sum())
            .unwrap()
            .to_bits(),
        expected.to_bits()
    );
    for kind in [TransportKind::InProc, TransportKind::Tcp] {
        let (got, _) = distributed(&v, &[3, 2, 2], kind);
        assert_eq!(got.to_bits(), expected.to_bits());
    }
}

#[test]
fn adversarial_rounding_is_identical_across_group_sizes() {
    let v: Vec<f64> = [1e16, 1.0, -1e16, 1.0].repeat(25);
    let canonical = canonical_tree_reduce(&v, &ReduceOp::sum()).unwrap();
    let sequential: f64 = v.iter().sum();
    assert_ne!(
        canonical.to_bits(),
        sequential.to_bits(),
        "input should be order-sensitive"
    );
    for p in 1..=4 {
        for seed in 0..5 {
            let (got, _) = distributed(&v, &random_counts(v.len(), p, seed), TransportKind::InProc);
            assert_eq!(got.to_bits(), canonical.to_bits(), "p={p} seed={seed}");
        }
        let (got, _) = distributed(
            &v,
            Distribution::even(v.len(), p).unwrap().counts(),
            TransportKind::Tcp,
        );
        assert_eq!(got.to_bits(), canonical.to_bits(), "tcp p={p}");
    }
}

#[test]
fn message_count_is_at_most_two_per_extra_rank() {
    for p in 1..=8 {
        for n in [1, 2, 3, 7, 8, 9, 31, 64, 100] {
            for seed in 0..6 {
                let counts = if seed == 0 {
                    Distribution::even(n, p).unwrap().counts().to_vec()
                } else {
                    random_counts(n, p, seed)
                };
                let v = wild_values(n, seed);
                let (got, messages) = distributed(&v, &counts, TransportKind::InProc);
                let canonical = canonical_tree_reduce(&v, &ReduceOp::sum()).unwrap();
                assert_eq!(got.to_bits(), canonical.to_bits(), "counts={counts:?}");
                assert!(
                    messages <= 2 * (p as u64 - 1),
                    "counts={counts:?}: {messages}"
                );
            }
        }
    }
}

#[test]
fn integer_sum_equals_plain_reduce() {
    let n = 57;
    let values: Vec<i64> = (0..n).map(|i| i * i - 40).collect();
    for p in [2, 5, 8] {
        let dist = Distribution::even(n as usize, p).unwrap();
        let out = run(p, TransportKind::InProc, |c| {
            let block = &values[dist.range(c.rank())];
            let repro = reproducible_reduce(&c, block, &dist, &ReduceOp::sum()).unwrap();
            let local: i64 = block.iter().sum();
            let plain = c
                .reduce()
                .send_buf(&[local])
                .op(ReduceOp::sum())
                .call()
                .unwrap();
            (repro, plain)
        });
        assert_eq!(out[0].0, Some(out[0].1[0]));
    }
}

#[test]
fn argument_errors() {
    run(2, TransportKind::InProc, |c| {
        let dist = Distribution::from_counts(vec![2, 2]).unwrap();
        let op = ReduceOp::<f64>::sum();
        assert!(matches!(
            reproducible_reduce(&c, &[1.0], &dist, &op),
            Err(Error::InvalidArgument(_))
        ));
        let three = Distribution::from_counts(vec![1, 1, 1]).unwrap();
        assert!(matches!(
            reproducible_reduce(&c, &[1.0], &three, &op),
            Err(Error::InvalidArgument(_))
        ));
        let empty = Distribution::from_counts(vec![0, 0]).unwrap();
        assert!(matches!(
            reproducible_reduce(&c, &[], &empty, &op),
            Err(Error::InvalidArgument(_))
        ));
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn result_is_independent_of_distribution(n in 1usize..200, p in 1usize..=8, seed in any::<u64>()) {
        let v = wild_values(n, seed);
        let canonical = canonical_tree_reduce(&v, &ReduceOp::sum()).unwrap();
        let (got, messages) = distributed(&v, &random_counts(n, p, seed ^ 0x5eed), TransportKind::InProc);
        prop_assert_eq!(got.to_bits(), canonical.to_bits());
        prop_assert!(messages <= 2 * (p as u64 - 1));
    }
}
