use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use commkit::{with_flattened, Communicator, Error, ReduceOp, Result};
use commkit_plugins::{build_grid, grid_alltoallv, sparse_alltoall};

use crate::graph::DistGraph;

/// Distance of a vertex the search has not reached.
pub const UNREACHED: u64 = u64::MAX;

/// How discovered remote vertices are exchanged after each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One dense all-to-all with explicit per-rank counts.
    Direct,
    /// Sparse exchange touching only ranks that receive something.
    Sparse,
    /// Two-hop exchange over a virtual processor grid.
    Grid,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "sparse" => Ok(Strategy::Sparse),
            "grid" => Ok(Strategy::Grid),
            other => Err(format!("unknown strategy {other:?} (direct, sparse, grid)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Direct => "direct",
            Strategy::Sparse => "sparse",
            Strategy::Grid => "grid",
        })
    }
}

fn exchange(
    comm: &Communicator,
    strategy: Strategy,
    outgoing: BTreeMap<usize, Vec<u64>>,
) -> Result<Vec<u64>> {
    let p = comm.size();
    match strategy {
        Strategy::Direct => Ok(with_flattened(outgoing, p)?
            .alltoallv(comm)?
            .into_recv_buf()),
        Strategy::Sparse => Ok(sparse_alltoall(comm, outgoing)?
            .into_iter()
            .flat_map(|(_, v)| v)
            .collect()),
        Strategy::Grid => {
            let f = with_flattened(outgoing, p)?;
            Ok(
                grid_alltoallv(comm, &build_grid(comm), &f.send_buf, &f.send_counts)?
                    .into_recv_buf(),
            )
        }
    }
}

/// Level-synchronous breadth-first search from global vertex `source`.
///
/// Returns the hop distance of every local vertex, [`UNREACHED`] where no
/// path exists. Each level expands the local frontier, sends discovered
/// remote vertices to their owners with the chosen strategy, and keeps the
/// ones not seen before as the next frontier. The search stops once every
/// rank's frontier is empty.
///
/// ```
/// use commkit::{run_world, TransportConfig};
/// use commkit_algorithms::{bfs, gen_graph, GraphSpec, Strategy};
///
/// let out = run_world(2, &TransportConfig::inproc(), |comm| {
///     let g = gen_graph(GraphSpec::Ring { n: 8 }, 0, comm.size(), comm.rank()).unwrap();
///     bfs(&comm, &g, 0, Strategy::Direct).unwrap()
/// })
/// .unwrap();
/// assert_eq!(out.concat(), vec![0, 1, 2, 3, 4, 3, 2, 1]);
/// ```
pub fn bfs(
    comm: &Communicator,
    graph: &DistGraph,
    source: u64,
    strategy: Strategy,
) -> Result<Vec<u64>> {
    if source >= graph.n() as u64 {
        return Err(Error::InvalidArgument(format!(
            "source {source} is not a vertex of a graph with {} vertices",
            graph.n()
        )));
    }
    let rank = comm.rank();
    let first = graph.local_range().start as u64;
    let mut dist = vec![UNREACHED; graph.local_vertices()];
    let mut frontier = Vec::new();
    if graph.owner(source) == rank {
        dist[(source - first) as usize] = 0;
        frontier.push(source);
    }

    let mut level = 0u64;
    loop {
        let done = comm.allreduce_single(frontier.is_empty(), ReduceOp::logical_and())?;
        if done {
            return Ok(dist);
        }
        level += 1;
        let mut next = Vec::new();
        let mut outgoing: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
        for &v in &frontier {
            for &u in graph.neighbors((v - first) as usize) {
                let owner = graph.owner(u);
                if owner == rank {
                    let d = &mut dist[(u - first) as usize];
                    if *d == UNREACHED {
                        *d = level;
                        next.push(u);
                    }
                } else {
                    outgoing.entry(owner).or_default().push(u);
                }
            }
        }
        for list in outgoing.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        for u in exchange(comm, strategy, outgoing)? {
            let d = &mut dist[(u - first) as usize];
            if *d == UNREACHED {
                *d = level;
                next.push(u);
            }
        }
        frontier = next;
    }
}

/// Sequential breadth-first search over an undirected edge list.
pub fn bfs_reference(n: usize, edges: &[(u64, u64)], source: u64) -> Vec<u64> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u as usize].push(v as usize);
        adj[v as usize].push(u as usize);
    }
    let mut dist = vec![UNREACHED; n];
    let mut queue = VecDeque::from([source as usize]);
    dist[source as usize] = 0;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == UNREACHED {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}
