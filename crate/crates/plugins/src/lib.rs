//! Communication plugins built on top of `commkit`'s internal channel.
//!
//! * [`sparse_alltoall`]: dynamic sparse data exchange where no rank knows
//!   who will send to it, terminated by a non-blocking barrier.
//! * [`grid_alltoallv`]: all-to-all routed in two hops over a virtual
//!   two-dimensional grid, so each rank talks to `O(sqrt p)` peers.
//! * [`reproducible_reduce`]: a reduction whose combination order is fixed
//!   by global element indices, so floating-point results do not depend on
//!   the number of ranks or on the data distribution.

mod grid;
mod reproducible;
mod sparse;

pub use grid::{build_grid, grid_alltoallv, GridTopology};
pub use reproducible::{canonical_tree_reduce, reproducible_reduce, tree_split};
pub use sparse::sparse_alltoall;

use commkit::InternalTag;

pub(crate) mod tags {
    use super::InternalTag;

    const fn plugin(id: u16) -> InternalTag {
        InternalTag::payload(InternalTag::PLUGIN_BASE + id)
    }

    /// Alternated between consecutive sparse exchanges on a communicator.
    pub const NBX: [InternalTag; 2] = [plugin(0), plugin(1)];
    pub const GRID_ROW: InternalTag = plugin(2);
    pub const GRID_FALLBACK: InternalTag = plugin(3);
    pub const GRID_COLUMN: InternalTag = plugin(4);
    pub const REPRODUCIBLE: InternalTag = plugin(5);
}
