mod common;

use commkit::{Communicator, Error, ResultBundle, TransportKind};
use commkit_plugins::{build_grid, grid_alltoallv, GridTopology};
use common::{alltoallv_input, count_matrix, measured, run};
use proptest::prelude::*;

fn both(c: &Communicator, counts: &[Vec<i32>]) -> (ResultBundle<u64>, ResultBundle<u64>) {
    let r = c.rank();
    let data = alltoallv_input(counts, r);
    let grid = grid_alltoallv(c, &build_grid(c), &data, &counts[r]).unwrap();
    let direct = c
        .alltoallv()
        .send_buf(&data)
        .send_counts(&counts[r])
        .recv_counts_out()
        .call()
        .unwrap();
    (grid, direct)
}

#[test]
fn four_ranks_all_pairs_equal_direct() {
    let counts = vec![vec![1; 4]; 4];
    for kind in [TransportKind::InProc, TransportKind::Tcp] {
        for (grid, direct) in run(4, kind, |c| both(&c, &counts)) {
            assert_eq!(grid, direct);
        }
    }
}

#[test]
fn single_rank_is_identity() {
    let out = run(1, TransportKind::InProc, |c| {
        let topo = build_grid(&c);
        grid_alltoallv(&c, &topo, &[3u8, 4, 5], &[3])
            .unwrap()
            .into_parts()
    });
    assert_eq!(out, vec![(vec![3, 4, 5], vec![vec![3]])]);
}

#[test]
fn equals_direct_for_every_size_up_to_16() {
    for p in 1..=16 {
        for seed in 0..3 {
            let counts = count_matrix(p, 4, 0.3, seed * 17 + p as u64);
            for (r, (grid, direct)) in run(p, TransportKind::InProc, |c| both(&c, &counts))
                .into_iter()
                .enumerate()
            {
                assert_eq!(grid, direct, "p={p} seed={seed} rank={r}");
            }
        }
    }
    for p in [3, 5, 7] {
        let counts = count_matrix(p, 3, 0.2, 99);
        for (grid, direct) in run(p, TransportKind::Tcp, |c| both(&c, &counts)) {
            assert_eq!(grid, direct, "tcp p={p}");
        }
    }
}

#[test]
fn distinct_destinations_stay_within_the_grid_bound() {
    for p in 1..=16 {
        let topo = GridTopology::new(p);
        let counts = vec![vec![1; p]; p];
        let (_, grid_stats) = measured(p, TransportKind::InProc, |c| {
            let data = alltoallv_input(&counts, c.rank());
            grid_alltoallv(&c, &build_grid(&c), &data, &counts[c.rank()]).unwrap();
        });
        let bound = (topo.columns() - 1) + (topo.rows() - 1) + 2;
        assert_eq!(topo.max_destinations(), bound);
        for s in &grid_stats {
            assert!(s.distinct_destinations as usize <= bound, "p={p}: {s:?}");
            if p >= 9 {
                assert!((s.distinct_destinations as usize) < p - 1, "p={p}: {s:?}");
            }
        }
        if p == 16 {
            assert!(grid_stats.iter().all(|s| s.distinct_destinations <= 6));
            let (_, direct_stats) = measured(p, TransportKind::InProc, |c| {
                let data = alltoallv_input(&counts, c.rank());
                c.alltoallv()
                    .send_buf(&data)
                    .send_counts(&counts[c.rank()])
                    .call()
                    .unwrap();
            });
            assert!(direct_stats.iter().all(|s| s.distinct_destinations == 15));
        }
    }
}

#[test]
fn elements_are_conserved() {
    let p = 11;
    let counts = count_matrix(p, 9, 0.5, 4);
    let out = run(p, TransportKind::InProc, |c| {
        let data = alltoallv_input(&counts, c.rank());
        grid_alltoallv(&c, &build_grid(&c), &data, &counts[c.rank()])
            .unwrap()
            .into_recv_buf()
            .len()
    });
    let sent: i32 = counts.iter().flatten().sum();
    assert_eq!(out.iter().sum::<usize>(), sent as usize);
}

#[test]
fn argument_errors() {
    run(3, TransportKind::InProc, |c| {
        let wrong = GridTopology::new(4);
        assert!(matches!(
            grid_alltoallv(&c, &wrong, &[1u8; 3], &[1, 1, 1]),
            Err(Error::InvalidArgument(_))
        ));
        let topo = build_grid(&c);
        assert!(matches!(
            grid_alltoallv(&c, &topo, &[1u8; 2], &[1, 1, 1]),
            Err(Error::SegmentOutOfRange { .. })
        ));
        assert!(matches!(
            grid_alltoallv(&c, &topo, &[1u8; 3], &[1, 1]),
            Err(Error::WrongLength { .. })
        ));
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observationally_equal_to_alltoallv(p in 1usize..=16, zero in 0.0f64..1.0, seed in any::<u64>()) {
        let counts = count_matrix(p, 5, zero, seed);
        for (grid, direct) in run(p, TransportKind::InProc, |c| both(&c, &counts)) {
            prop_assert_eq!(grid, direct);
        }
    }
}
