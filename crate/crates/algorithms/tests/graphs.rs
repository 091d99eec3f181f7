use commkit_algorithms::{gen_graph, global_edges, GraphSpec};

/// Every `(u, v)` adjacency entry held by any rank, sorted.
fn adjacency(spec: GraphSpec, seed: u64, p: usize) -> Vec<(u64, u64)> {
    let mut all = Vec::new();
    for r in 0..p {
        let g = gen_graph(spec, seed, p, r).unwrap();
        let first = g.local_range().start as u64;
        for i in 0..g.local_vertices() {
            all.extend(g.neighbors(i).iter().map(|&u| (first + i as u64, u)));
        }
    }
    all.sort_unstable();
    all
}

#[test]
fn gnm_is_independent_of_rank_count() {
    let spec = GraphSpec::Gnm { n: 100, m: 300 };
    let one = adjacency(spec, 7, 1);
    assert_eq!(one.len(), 600);
    for p in [2, 3, 4, 7] {
        assert_eq!(adjacency(spec, 7, p), one, "p={p}");
    }
}

#[test]
fn generators_are_deterministic_and_symmetric() {
    for spec in [
        GraphSpec::Ring { n: 50 },
        GraphSpec::Grid2d { rows: 5, cols: 8 },
        GraphSpec::Gnm { n: 64, m: 200 },
    ] {
        assert_eq!(
            global_edges(spec, 3).unwrap(),
            global_edges(spec, 3).unwrap()
        );
        let adj = adjacency(spec, 3, 4);
        for &(u, v) in &adj {
            assert!(adj.binary_search(&(v, u)).is_ok());
        }
    }
    assert_ne!(
        global_edges(GraphSpec::Gnm { n: 64, m: 200 }, 3).unwrap(),
        global_edges(GraphSpec::Gnm { n: 64, m: 200 }, 4).unwrap()
    );
}

#[test]
fn invalid_parameters() {
    assert!(global_edges(GraphSpec::Grid2d { rows: 0, cols: 3 }, 0).is_err());
    assert!(global_edges(GraphSpec::Gnm { n: 10, m: 46 }, 0).is_err());
    assert!(gen_graph(GraphSpec::Ring { n: 10 }, 0, 0, 0).is_err());
}
