//! Collective operations.
//!
//! Each collective is started from a [`Communicator`] method returning a
//! builder. Setters may be called in any order; `call()` checks that every
//! required parameter is present, reporting all missing ones together, and
//! then runs the operation.
//!
//! ```
//! use commkit::{run_world, TransportConfig};
//!
//! let out = run_world(3, &TransportConfig::inproc(), |comm| {
//!     let mine: Vec<u32> = vec![comm.rank() as u32; comm.rank() + 1];
//!     let mut res = comm
//!         .allgatherv()
//!         .send_buf(&mine)
//!         .recv_counts_out()
//!         .call()
//!         .unwrap();
//!     (res.extract_recv_buf().unwrap(), res.extract_recv_counts().unwrap())
//! })
//! .unwrap();
//! assert_eq!(out[0].0, vec![0, 1, 1, 2, 2, 2]);
//! assert_eq!(out[2].1, vec![1, 2, 3]);
//! ```
//!
//! # Algorithms and message counts
//!
//! With all parameters passed explicitly and assertions at level `none`, the
//! collectives send exactly the envelopes of these baseline algorithms
//! (counts are totals over all ranks; `nz(..)` is the number of nonzero
//! entries):
//!
//! | operation  | algorithm                                   | envelopes |
//! |------------|---------------------------------------------|-----------|
//! | bcast      | binomial tree                               | `p-1` |
//! | allgather  | gather to rank 0, then bcast                | `2(p-1)`, none if `k = 0` |
//! | allgatherv | gatherv to rank 0, then bcast               | `nz(counts[1..]) + (p-1 if total > 0)` |
//! | gatherv    | direct sends to the root                    | `nz(counts without root)` |
//! | alltoall   | direct sends                                | `p(p-1)`, none if `k = 0` |
//! | alltoallv  | direct sends                                | `nz(off-diagonal counts)` |
//! | reduce     | binomial fold to rank 0, then move to root  | `p-1 (+1 if root != 0)`, none if empty |
//! | allreduce  | reduce to rank 0, then bcast                | `2(p-1)`, none if empty |
//! | barrier    | dissemination                               | `p*ceil(log2 p)` protocol envelopes |
//!
//! Inferring `recv_counts` adds one allgather (allgatherv, gatherv: one
//! gather) or one alltoall (alltoallv) of the counts. Level `heavy` adds
//! consistency exchanges.

macro_rules! common_setters {
    () => {
        /// Overrides the communicator's assertion level for this call.
        pub fn assertion_level(mut self, level: $crate::params::AssertionLevel) -> Self {
            self.common.level = Some(level);
            self
        }
    };
}

mod allgather;
mod alltoall;
mod bcast;
mod flatten;
mod reduce;

pub use allgather::{Allgather, Allgatherv, Gatherv};
pub use alltoall::{Alltoall, Alltoallv};
pub use bcast::Bcast;
pub use flatten::{with_flattened, Flattened};
pub use reduce::{Reduce, ReduceOp};

pub(crate) use allgather::allgather_plain;
pub(crate) use alltoall::alltoall_plain;
pub(crate) use bcast::bcast_bytes;

use crate::datatype::{self, Plain};
use crate::error::{Error, Result};
use crate::params::{AssertionLevel, ResizePolicy, Target};

/// Bookkeeping shared by all builders: duplicate in-parameters and a
/// per-call assertion level.
#[derive(Debug, Default)]
pub(crate) struct Common {
    duplicate: Option<&'static str>,
    level: Option<AssertionLevel>,
}

impl Common {
    pub(crate) fn set<T>(&mut self, slot: &mut Option<T>, value: T, name: &'static str) {
        if slot.is_some() {
            self.duplicate.get_or_insert(name);
        }
        *slot = Some(value);
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self.duplicate {
            Some(name) => Err(Error::DuplicateParameter(name)),
            None => Ok(()),
        }
    }

    pub(crate) fn level(&self, comm: &crate::Communicator) -> AssertionLevel {
        self.level.unwrap_or_else(|| comm.assertion_level())
    }
}

/// Optional caller-provided receive container.
#[derive(Debug)]
pub(crate) struct RecvBuf<T>(Option<Target<T>>);

impl<T> Default for RecvBuf<T> {
    fn default() -> Self {
        RecvBuf(None)
    }
}

impl<T: Clone> RecvBuf<T> {
    pub(crate) fn set(&mut self, common: &mut Common, container: Vec<T>, policy: ResizePolicy) {
        common.set(&mut self.0, Target::new(container, policy), "recv_buf");
    }

    pub(crate) fn finish(self, values: Vec<T>) -> Result<Vec<T>> {
        match self.0 {
            None => Ok(values),
            Some(t) => t.fill(&values, "recv_buf"),
        }
    }
}

impl<T: Plain> RecvBuf<T> {
    /// A container of at least `required` elements under the caller's
    /// policy; new slots hold [`datatype::zeroed`].
    pub(crate) fn prepare(self, required: usize) -> Result<Vec<T>> {
        let Some(Target {
            mut container,
            policy,
        }) = self.0
        else {
            return Ok(vec![datatype::zeroed(); required]);
        };
        match policy {
            ResizePolicy::NoResize if container.len() < required => {
                return Err(Error::Capacity {
                    param: "recv_buf",
                    len: container.len(),
                    required,
                })
            }
            ResizePolicy::NoResize => {}
            ResizePolicy::GrowOnly if container.len() >= required => {}
            ResizePolicy::GrowOnly | ResizePolicy::ResizeToFit => {
                container.resize(required, datatype::zeroed())
            }
        }
        Ok(container)
    }
}

/// Decodes a segment received from `sender`, checking it holds `expected`
/// elements.
pub(crate) fn decode_checked<T: Plain>(
    bytes: &[u8],
    expected: usize,
    sender: usize,
    receiver: usize,
) -> Result<Vec<T>> {
    let values: Vec<T> = datatype::decode(bytes)?;
    if values.len() != expected {
        return Err(Error::CountMismatch {
            sender,
            receiver,
            sent: values.len() as i64,
            expected: expected as i64,
        });
    }
    Ok(values)
}

/// Makes a local argument check collective: every rank learns whether any
/// rank failed. The failing rank gets its own error, the others
/// [`Error::PeerRejected`] naming the lowest failing rank.
pub(crate) fn agree<X>(
    comm: &crate::Communicator,
    op: &'static str,
    local: Result<X>,
) -> Result<X> {
    let flags = allgather_plain(comm, &[u8::from(local.is_err())])?;
    match (local, flags.iter().position(|&f| f != 0)) {
        (Err(e), _) => Err(e),
        (Ok(_), Some(rank)) => Err(Error::PeerRejected { op, rank }),
        (Ok(x), None) => Ok(x),
    }
}

/// Sum of counts as a buffer length, rejecting totals beyond `i32`.
pub(crate) fn total(counts: &[i32], param: &'static str) -> Result<usize> {
    counts
        .iter()
        .try_fold(0i32, |acc, &c| acc.checked_add(c))
        .map(|t| t as usize)
        .ok_or(Error::DisplacementOverflow { param })
}

impl crate::Communicator {
    /// Broadcast from a root; see [`Bcast`].
    pub fn bcast<C: crate::datatype::Codec>(&self) -> Bcast<'_, C> {
        Bcast::new(self)
    }

    /// Rank-ordered concatenation of equal-sized contributions.
    pub fn allgather<'b, T: Plain>(&self) -> Allgather<'_, 'b, T> {
        Allgather::new(self)
    }

    /// Rank-ordered concatenation of variable-sized contributions.
    pub fn allgatherv<'b, T: Plain>(&self) -> Allgatherv<'_, 'b, T> {
        Allgatherv::new(self)
    }

    pub fn gatherv<'b, T: Plain>(&self) -> Gatherv<'_, 'b, T> {
        Gatherv::new(self)
    }

    pub fn alltoall<'b, T: Plain>(&self) -> Alltoall<'_, 'b, T> {
        Alltoall::new(self)
    }

    pub fn alltoallv<'b, T: Plain>(&self) -> Alltoallv<'_, 'b, T> {
        Alltoallv::new(self)
    }

    pub fn reduce<'b, T: Plain>(&self) -> Reduce<'_, 'b, T> {
        Reduce::new(self, false)
    }

    pub fn allreduce<'b, T: Plain>(&self) -> Reduce<'_, 'b, T> {
        Reduce::new(self, true)
    }

    /// One-element allreduce.
    pub fn allreduce_single<T: Plain>(&self, value: T, op: ReduceOp<T>) -> Result<T> {
        Ok(self.allreduce().send_buf(&[value]).op(op).call()?[0])
    }
}
