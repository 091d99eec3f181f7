//! Application kernels on top of `commkit`: a distributed sample sort and a
//! level-synchronous breadth-first search with a choice of exchange
//! strategy, plus deterministic graph generators and sequential references.

mod bfs;
mod graph;
mod sort;

pub use bfs::{bfs, bfs_reference, Strategy, UNREACHED};
pub use graph::{gen_graph, global_edges, DistGraph, GraphKind, GraphSpec};
pub use sort::{sample_sort, sample_sort_by, DEFAULT_OVERSAMPLING};
