use commkit::Distribution;
use commkit::{run_world, Error, TransportConfig, TransportKind};
use commkit_algorithms::{
    bfs, bfs_reference, gen_graph, global_edges, DistGraph, GraphKind, GraphSpec, Strategy,
    UNREACHED,
};

const STRATEGIES: [Strategy; 3] = [Strategy::Direct, Strategy::Sparse, Strategy::Grid];

fn distributed(
    kind: TransportKind,
    p: usize,
    spec: GraphSpec,
    seed: u64,
    source: u64,
    s: Strategy,
) -> Vec<u64> {
    run_world(p, &TransportConfig::of_kind(kind), |c| {
        let g = gen_graph(spec, seed, c.size(), c.rank()).unwrap();
        bfs(&c, &g, source, s).unwrap()
    })
    .unwrap()
    .concat()
}

#[test]
fn ring_of_eight() {
    for s in STRATEGIES {
        let d = distributed(TransportKind::InProc, 2, GraphSpec::Ring { n: 8 }, 0, 0, s);
        assert_eq!(d, vec![0, 1, 2, 3, 4, 3, 2, 1], "{s}");
    }
}

#[test]
fn isolated_source() {
    for s in STRATEGIES {
        let out = run_world(3, &TransportConfig::inproc(), |c| {
            let g = DistGraph::from_edges(
                Distribution::even(7, 3).unwrap(),
                c.rank(),
                &[(0, 1), (1, 2)],
            )
            .unwrap();
            bfs(&c, &g, 5, s).unwrap()
        })
        .unwrap()
        .concat();
        let mut expected = vec![UNREACHED; 7];
        expected[5] = 0;
        assert_eq!(out, expected);
    }
}

#[test]
fn gnm_256_agrees_with_oracle_for_all_strategies() {
    let spec = GraphSpec::Gnm { n: 256, m: 1024 };
    let expected = bfs_reference(256, &global_edges(spec, 42).unwrap(), 0);
    for p in [1, 2, 4, 8] {
        for s in STRATEGIES {
            assert_eq!(
                distributed(TransportKind::InProc, p, spec, 42, 0, s),
                expected,
                "p={p} {s}"
            );
        }
    }
}

#[test]
fn all_families_all_strategies_both_transports() {
    let specs = [
        GraphSpec::of_kind(GraphKind::Ring, 300, 0),
        GraphSpec::of_kind(GraphKind::Grid2d, 400, 0),
        GraphSpec::of_kind(GraphKind::Gnm, 500, 900),
    ];
    for spec in specs {
        let edges = global_edges(spec, 9).unwrap();
        for source in [0, spec.vertices() as u64 / 2] {
            let expected = bfs_reference(spec.vertices(), &edges, source);
            for kind in [TransportKind::InProc, TransportKind::Tcp] {
                for p in [2, 4, 8] {
                    for s in STRATEGIES {
                        assert_eq!(
                            distributed(kind, p, spec, 9, source, s),
                            expected,
                            "{spec:?} {kind:?} p={p} {s}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn large_graphs_at_4096() {
    for kind in [GraphKind::Ring, GraphKind::Grid2d, GraphKind::Gnm] {
        let spec = GraphSpec::of_kind(kind, 4096, 16384);
        let expected = bfs_reference(4096, &global_edges(spec, 1).unwrap(), 17);
        for s in STRATEGIES {
            assert_eq!(
                distributed(TransportKind::InProc, 8, spec, 1, 17, s),
                expected,
                "{kind} {s}"
            );
        }
    }
}

#[test]
fn source_out_of_range() {
    run_world(2, &TransportConfig::inproc(), |c| {
        let g = gen_graph(GraphSpec::Ring { n: 4 }, 0, 2, c.rank()).unwrap();
        assert!(matches!(
            bfs(&c, &g, 4, Strategy::Direct),
            Err(Error::InvalidArgument(_))
        ));
    })
    .unwrap();
}
