mod common;

use commkit::{as_serialized, with_flattened, Error, TransportKind};
use commkit_plugins::sparse_alltoall;
use common::{measured, run};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [TransportKind; 2] = [TransportKind::InProc, TransportKind::Tcp];

/// Destination-message pairs per rank: about `density * p` destinations each.
fn pattern(p: usize, density: f64, seed: u64) -> Vec<Vec<(usize, Vec<u32>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..p)
        .map(|s| {
            let mut sends = Vec::new();
            for d in 0..p {
                if rng.gen_bool(density) {
                    let len = rng.gen_range(0..5);
                    sends.push((
                        d,
                        (0..len)
                            .map(|i| (s * 100_000 + d * 100 + i) as u32)
                            .collect(),
                    ));
                }
            }
            sends
        })
        .collect()
}

#[test]
fn three_rank_example() {
    for kind in KINDS {
        let out = run(3, kind, |c| {
            let sends = match c.rank() {
                0 => vec![(2, as_serialized("x".to_string()))],
                1 => vec![],
                _ => vec![
                    (0, as_serialized("y".to_string())),
                    (1, as_serialized("z".to_string())),
                ],
            };
            sparse_alltoall(&c, sends)
                .unwrap()
                .into_iter()
                .map(|(src, v)| (src, v.into_inner().unwrap()))
                .collect::<Vec<_>>()
        });
        assert_eq!(
            out,
            vec![
                vec![(2, "y".to_string())],
                vec![(2, "z".to_string())],
                vec![(0, "x".to_string())]
            ]
        );
    }
}

#[test]
fn empty_pattern_terminates() {
    for kind in KINDS {
        for p in 1..=8 {
            let out = run(p, kind, |c| sparse_alltoall::<Vec<u8>>(&c, vec![]).unwrap());
            assert!(out.iter().all(Vec::is_empty), "p={p}");
        }
    }
}

#[test]
fn random_patterns_match_dense_oracle() {
    for kind in KINDS {
        for p in [2, 4, 8] {
            for seed in 0..4 {
                let plan = pattern(p, 0.3, seed);
                let out = run(p, kind, |c| {
                    let sparse = sparse_alltoall(&c, plan[c.rank()].clone()).unwrap();
                    let dense = with_flattened(plan[c.rank()].clone(), p)
                        .unwrap()
                        .alltoallv(&c)
                        .unwrap()
                        .into_recv_buf();
                    (sparse, dense)
                });
                for (r, (sparse, dense)) in out.into_iter().enumerate() {
                    let flat: Vec<u32> = sparse.iter().flat_map(|(_, v)| v.clone()).collect();
                    assert_eq!(flat, dense, "p={p} seed={seed} rank={r} {kind:?}");
                    let mut got: Vec<_> = sparse;
                    got.sort();
                    let mut expected: Vec<(usize, Vec<u32>)> = (0..p)
                        .flat_map(|s| {
                            plan[s]
                                .iter()
                                .filter(|(d, _)| *d == r)
                                .map(move |(_, v)| (s, v.clone()))
                        })
                        .collect();
                    expected.sort();
                    assert_eq!(got, expected);
                }
            }
        }
    }
}

#[test]
fn duplicates_and_self_sends_keep_per_source_order() {
    let out = run(3, TransportKind::InProc, |c| {
        let r = c.rank() as u8;
        let sends = vec![(0, vec![r, 1]), (c.rank(), vec![r, 2]), (0, vec![r, 3])];
        sparse_alltoall(&c, sends).unwrap()
    });
    assert_eq!(
        out[0],
        vec![
            (0, vec![0, 1]),
            (0, vec![0, 2]),
            (0, vec![0, 3]),
            (1, vec![1, 1]),
            (1, vec![1, 3]),
            (2, vec![2, 1]),
            (2, vec![2, 3]),
        ]
    );
    assert_eq!(out[1], vec![(1, vec![1, 2])]);
}

#[test]
fn back_to_back_calls_do_not_mix() {
    for kind in KINDS {
        let p = 6;
        let plans: Vec<_> = (0..12).map(|i| pattern(p, 0.4, 100 + i)).collect();
        let out = run(p, kind, |c| {
            plans
                .iter()
                .map(|plan| sparse_alltoall(&c, plan[c.rank()].clone()).unwrap())
                .collect::<Vec<_>>()
        });
        for (r, per_call) in out.into_iter().enumerate() {
            for (i, got) in per_call.into_iter().enumerate() {
                let expected: Vec<(usize, Vec<u32>)> = (0..p)
                    .flat_map(|s| {
                        plans[i][s]
                            .iter()
                            .filter(|(d, _)| *d == r)
                            .map(move |(_, v)| (s, v.clone()))
                    })
                    .collect();
                assert_eq!(got, expected, "call {i} rank {r} {kind:?}");
            }
        }
    }
}

#[test]
fn payload_envelopes_equal_destination_count() {
    for p in [4, 8, 16, 32] {
        // Each rank sends to its two ring neighbours.
        let (_, stats) = measured(p, TransportKind::InProc, |c| {
            let (r, p) = c.rank_and_size();
            let sends = vec![
                ((r + 1) % p, vec![r as u32]),
                ((r + p - 1) % p, vec![r as u32]),
            ];
            sparse_alltoall(&c, sends).unwrap()
        });
        let rounds = (p as f64).log2().ceil() as u64;
        for s in stats {
            assert_eq!(s.messages_sent, 2, "p={p}");
            assert_eq!(s.protocol_messages_sent, rounds, "p={p}");
        }
    }
}

#[test]
fn out_of_range_destination() {
    run(2, TransportKind::InProc, |c| {
        let r = sparse_alltoall(&c, vec![(2, vec![1u8])]);
        assert!(matches!(r, Err(Error::InvalidRank { rank: 2, size: 2 })));
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn delivery_is_exactly_once(p in 1usize..7, density in 0.0f64..1.0, seed in any::<u64>()) {
        let plan = pattern(p, density, seed);
        let out = run(p, TransportKind::InProc, |c| sparse_alltoall(&c, plan[c.rank()].clone()).unwrap());
        let mut received: Vec<(usize, usize, Vec<u32>)> = out
            .into_iter()
            .enumerate()
            .flat_map(|(d, msgs)| msgs.into_iter().map(move |(s, v)| (s, d, v)))
            .collect();
        let mut sent: Vec<(usize, usize, Vec<u32>)> = plan
            .iter()
            .enumerate()
            .flat_map(|(s, sends)| sends.iter().map(move |(d, v)| (s, *d, v.clone())))
            .collect();
        received.sort();
        sent.sort();
        prop_assert_eq!(received, sent);
    }
}
