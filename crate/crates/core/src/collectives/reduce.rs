use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use crate::communicator::{tags, Communicator};
use crate::datatype::{self, Plain};
use crate::error::{Error, Result};
use crate::params::Missing;

use super::{allgather_plain, bcast_bytes, Common};

/// A binary reduction operation applied elementwise.
///
/// Operations are associative by contract. Built-in operations are
/// commutative; reductions always combine operands in rank order, so
/// non-commutative custom operations are supported too.
pub struct ReduceOp<T> {
    f: Arc<dyn Fn(T, T) -> T + Send + Sync>,
    commutative: bool,
    name: &'static str,
}

impl<T> Clone for ReduceOp<T> {
    fn clone(&self) -> Self {
        ReduceOp {
            f: Arc::clone(&self.f),
            commutative: self.commutative,
            name: self.name,
        }
    }
}

impl<T> fmt::Debug for ReduceOp<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReduceOp")
            .field("name", &self.name)
            .field("commutative", &self.commutative)
            .finish()
    }
}

impl<T: Plain> ReduceOp<T> {
    pub fn custom(f: impl Fn(T, T) -> T + Send + Sync + 'static, commutative: bool) -> Self {
        ReduceOp {
            f: Arc::new(f),
            commutative,
            name: "custom",
        }
    }

    pub fn is_commutative(&self) -> bool {
        self.commutative
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn apply(&self, left: T, right: T) -> T {
        (self.f)(left, right)
    }

    /// `acc[i] = op(acc[i], right[i])`.
    pub fn combine(&self, acc: &mut [T], right: &[T]) {
        for (a, &b) in acc.iter_mut().zip(right) {
            *a = (self.f)(*a, b);
        }
    }

    fn builtin(name: &'static str, f: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        ReduceOp {
            f: Arc::new(f),
            commutative: true,
            name,
        }
    }
}

impl<T: Plain + Add<Output = T>> ReduceOp<T> {
    pub fn sum() -> Self {
        Self::builtin("sum", |a, b| a + b)
    }
}

impl<T: Plain + PartialOrd> ReduceOp<T> {
    pub fn min() -> Self {
        Self::builtin("min", |a, b| if b < a { b } else { a })
    }

    pub fn max() -> Self {
        Self::builtin("max", |a, b| if b > a { b } else { a })
    }
}

impl ReduceOp<bool> {
    pub fn logical_and() -> Self {
        Self::builtin("logical_and", |a, b| a && b)
    }

    pub fn logical_or() -> Self {
        Self::builtin("logical_or", |a, b| a || b)
    }
}

/// Binomial fold toward rank 0: rank `r` combines its accumulator with the
/// ones of `r + 1, r + 2, r + 4, ...` (as long as the partner is in range and
/// `r` has no lower set bit), keeping lower ranks as left operands.
fn fold_to_zero<T: Plain>(comm: &Communicator, local: &[T], op: &ReduceOp<T>) -> Result<Vec<T>> {
    let (rank, p) = comm.rank_and_size();
    let mut acc = local.to_vec();
    let mut mask = 1usize;
    while mask < p {
        if rank & mask != 0 {
            comm.internal_send(rank - mask, tags::REDUCE, datatype::encode(&acc))?;
            return Ok(Vec::new());
        }
        if rank + mask < p {
            let src = rank + mask;
            let right: Vec<T> = datatype::decode(&comm.internal_recv(src, tags::REDUCE)?)?;
            if right.len() != acc.len() {
                return Err(unequal(rank, acc.len(), src, right.len()));
            }
            op.combine(&mut acc, &right);
        }
        mask <<= 1;
    }
    Ok(acc)
}

fn unequal(a: usize, a_len: usize, b: usize, b_len: usize) -> Error {
    Error::UnequalContributions {
        op: "reduce",
        detail: format!("rank {a} holds {a_len} element(s), rank {b} holds {b_len}"),
    }
}

/// Builder for [`Communicator::reduce`] and [`Communicator::allreduce`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Reduce<'c, 'b, T> {
    comm: &'c Communicator,
    common: Common,
    all: bool,
    send_buf: Option<&'b [T]>,
    op: Option<ReduceOp<T>>,
    root: Option<usize>,
}

impl<'c, 'b, T: Plain> Reduce<'c, 'b, T> {
    pub(crate) fn new(comm: &'c Communicator, all: bool) -> Self {
        Reduce {
            comm,
            common: Common::default(),
            all,
            send_buf: None,
            op: None,
            root: None,
        }
    }

    /// This rank's operands; every rank passes the same number.
    pub fn send_buf(mut self, buf: &'b [T]) -> Self {
        self.common.set(&mut self.send_buf, buf, "send_buf");
        self
    }

    pub fn op(mut self, op: ReduceOp<T>) -> Self {
        self.common.set(&mut self.op, op, "op");
        self
    }

    /// Receiving rank of a reduce; defaults to rank 0.
    pub fn root(mut self, root: usize) -> Self {
        self.common.set(&mut self.root, root, "root");
        self
    }

    common_setters!();

    /// The elementwise fold over ranks `0..size` in rank order, returned at
    /// the root (every rank for allreduce); other ranks get an empty vector.
    pub fn call(self) -> Result<Vec<T>> {
        let name = if self.all { "allreduce" } else { "reduce" };
        Missing::default()
            .require(&self.send_buf, "send_buf")
            .require(&self.op, "op")
            .finish(name)?;
        self.common.check()?;
        if self.all && self.root.is_some() {
            return Err(Error::ConflictingParameters {
                op: name,
                detail: "allreduce has no root".into(),
            });
        }
        let comm = self.comm;
        let rank = comm.rank();
        let local = self.send_buf.expect("checked above");
        let op = self.op.expect("checked above");
        let root = self.root.unwrap_or(0);
        comm.check_rank(root)?;

        if self.common.level(comm).heavy() {
            let lens = allgather_plain(comm, &[local.len() as u64])?;
            if let Some(s) = lens.iter().position(|&n| n != lens[0]) {
                return Err(unequal(0, lens[0] as usize, s, lens[s] as usize));
            }
        }
        if local.is_empty() || comm.size() == 1 {
            return Ok(local.to_vec());
        }
        let n = local.len();
        let folded = fold_to_zero(comm, local, &op)?;
        if self.all {
            let bytes = bcast_bytes(
                comm,
                0,
                (rank == 0).then(|| datatype::encode(&folded)),
                tags::BCAST,
            )?;
            let out: Vec<T> = datatype::decode(&bytes)?;
            if out.len() != n {
                return Err(unequal(0, out.len(), rank, n));
            }
            return Ok(out);
        }
        if root == 0 {
            return Ok(folded);
        }
        if rank == 0 {
            comm.internal_send(root, tags::REDUCE, datatype::encode(&folded))?;
            Ok(Vec::new())
        } else if rank == root {
            let out: Vec<T> = datatype::decode(&comm.internal_recv(0, tags::REDUCE)?)?;
            if out.len() != n {
                return Err(unequal(0, out.len(), rank, n));
            }
            Ok(out)
        } else {
            Ok(Vec::new())
        }
    }
}
