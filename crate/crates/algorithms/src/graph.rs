use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use commkit::{Distribution, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Graph families produced by [`gen_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    Ring,
    Grid2d,
    Gnm,
}

impl FromStr for GraphKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ring" => Ok(GraphKind::Ring),
            "grid2d" => Ok(GraphKind::Grid2d),
            "gnm" => Ok(GraphKind::Gnm),
            other => Err(format!("unknown graph kind {other:?} (ring, grid2d, gnm)")),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Ring => "ring",
            GraphKind::Grid2d => "grid2d",
            GraphKind::Gnm => "gnm",
        })
    }
}

/// A concrete undirected graph description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSpec {
    /// Cycle `0 - 1 - ... - (n-1) - 0`; needs `n >= 3`.
    Ring { n: usize },
    /// `rows × cols` lattice with 4-neighbourhoods, vertices numbered row by
    /// row.
    Grid2d { rows: usize, cols: usize },
    /// `m` distinct edges without self-loops, drawn uniformly.
    Gnm { n: usize, m: usize },
}

impl GraphSpec {
    /// The spec of `kind` with `n` vertices. `grid2d` uses the most square
    /// factorisation `rows × cols = n` with `rows <= cols`; `m` is only read
    /// for `gnm`.
    pub fn of_kind(kind: GraphKind, n: usize, m: usize) -> Self {
        match kind {
            GraphKind::Ring => GraphSpec::Ring { n },
            GraphKind::Grid2d => {
                let rows = (1..=n)
                    .take_while(|r| r * r <= n)
                    .filter(|&r| n.is_multiple_of(r))
                    .last()
                    .unwrap_or(0);
                GraphSpec::Grid2d {
                    rows,
                    cols: n.checked_div(rows).unwrap_or(0),
                }
            }
            GraphKind::Gnm => GraphSpec::Gnm { n, m },
        }
    }

    pub fn vertices(&self) -> usize {
        match *self {
            GraphSpec::Ring { n } | GraphSpec::Gnm { n, .. } => n,
            GraphSpec::Grid2d { rows, cols } => rows * cols,
        }
    }
}

/// The global edge list of `spec`, each undirected edge once as `(u, v)`
/// with `u < v`. Depends only on `spec` and `seed`.
pub fn global_edges(spec: GraphSpec, seed: u64) -> Result<Vec<(u64, u64)>> {
    let invalid = |msg: String| Err(Error::InvalidArgument(msg));
    match spec {
        GraphSpec::Ring { n } => {
            if n < 3 {
                return invalid(format!("a ring needs at least 3 vertices, got {n}"));
            }
            let n = n as u64;
            let mut edges: Vec<_> = (0..n - 1).map(|v| (v, v + 1)).collect();
            edges.push((0, n - 1));
            Ok(edges)
        }
        GraphSpec::Grid2d { rows, cols } => {
            if rows == 0 || cols == 0 {
                return invalid(format!(
                    "grid dimensions must be positive, got {rows}x{cols}"
                ));
            }
            let id = |r: usize, c: usize| (r * cols + c) as u64;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            Ok(edges)
        }
        GraphSpec::Gnm { n, m } => {
            let possible = (n as u128) * (n.saturating_sub(1) as u128) / 2;
            if m as u128 > possible {
                return invalid(format!("{m} distinct edges do not fit on {n} vertices"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = HashSet::with_capacity(m);
            let mut edges = Vec::with_capacity(m);
            while edges.len() < m {
                let a = rng.gen_range(0..n as u64);
                let b = rng.gen_range(0..n as u64);
                if a == b {
                    continue;
                }
                let e = (a.min(b), a.max(b));
                if seen.insert(e) {
                    edges.push(e);
                }
            }
            Ok(edges)
        }
    }
}

/// One rank's share of an undirected graph: the vertices of its block in
/// `vertex_dist` with their adjacency lists (global ids).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistGraph {
    vertex_dist: Distribution,
    rank: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u64>,
}

impl DistGraph {
    /// Keeps the edges incident to `rank`'s block, storing each edge at both
    /// endpoints. Neighbour order follows `edges`.
    pub fn from_edges(
        vertex_dist: Distribution,
        rank: usize,
        edges: &[(u64, u64)],
    ) -> Result<Self> {
        if rank >= vertex_dist.size() {
            return Err(Error::InvalidRank {
                rank,
                size: vertex_dist.size(),
            });
        }
        let n = vertex_dist.n() as u64;
        let range = vertex_dist.range(rank);
        let (lo, hi) = (range.start as u64, range.end as u64);
        let mut degree = vec![0usize; range.len()];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) leaves the vertex range 0..{n}"
                )));
            }
            for x in [u, v] {
                if (lo..hi).contains(&x) {
                    degree[(x - lo) as usize] += 1;
                }
            }
        }
        let mut offsets = Vec::with_capacity(degree.len() + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..degree.len()].to_vec();
        let mut neighbors = vec![0u64; *offsets.last().unwrap()];
        for &(u, v) in edges {
            for (x, y) in [(u, v), (v, u)] {
                if (lo..hi).contains(&x) {
                    let slot = &mut fill[(x - lo) as usize];
                    neighbors[*slot] = y;
                    *slot += 1;
                }
            }
        }
        Ok(DistGraph {
            vertex_dist,
            rank,
            offsets,
            neighbors,
        })
    }

    /// Total vertices.
    pub fn n(&self) -> usize {
        self.vertex_dist.n()
    }

    pub fn vertex_dist(&self) -> &Distribution {
        &self.vertex_dist
    }

    /// Global ids of the local vertices.
    pub fn local_range(&self) -> std::ops::Range<usize> {
        self.vertex_dist.range(self.rank)
    }

    pub fn local_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Rank holding global vertex `v`.
    pub fn owner(&self, v: u64) -> usize {
        self.vertex_dist.owner(v as usize)
    }

    /// Neighbours of the `i`-th local vertex.
    pub fn neighbors(&self, i: usize) -> &[u64] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Sum of local degrees.
    pub fn local_edges(&self) -> usize {
        self.neighbors.len()
    }
}

/// `rank`'s part of `spec` under an even block distribution over `p` ranks.
/// The global graph does not depend on `p`.
pub fn gen_graph(spec: GraphSpec, seed: u64, p: usize, rank: usize) -> Result<DistGraph> {
    let edges = global_edges(spec, seed)?;
    DistGraph::from_edges(Distribution::even(spec.vertices(), p)?, rank, &edges)
}
