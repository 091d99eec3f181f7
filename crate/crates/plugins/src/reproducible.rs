use std::collections::{BTreeMap, HashMap, VecDeque};

use commkit::datatype::{self, Plain};
use commkit::{CodecError, Communicator, Distribution, Error, ReduceOp, Result};

use crate::tags;

/// Size of the left child of a tree node covering `len >= 2` elements: the
/// largest power of two strictly below `len`.
pub fn tree_split(len: usize) -> usize {
    debug_assert!(len >= 2);
    1 << (usize::BITS - 1 - (len - 1).leading_zeros())
}

/// Sequential reference: combines `values` along the fixed tree in which a
/// node over `lo..hi` has children `lo..lo+m` and `lo+m..hi` with
/// `m = tree_split(hi - lo)`.
///
/// ```
/// use commkit::ReduceOp;
/// use commkit_plugins::canonical_tree_reduce;
///
/// let sum = canonical_tree_reduce(&[1.0f64, 2.0, 3.0, 4.0], &ReduceOp::sum()).unwrap();
/// assert_eq!(sum, (1.0 + 2.0) + (3.0 + 4.0));
/// ```
pub fn canonical_tree_reduce<T: Plain>(values: &[T], op: &ReduceOp<T>) -> Result<T> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "a reduction needs at least one element".into(),
        ));
    }
    Ok(fold(values, op))
}

fn fold<T: Plain>(values: &[T], op: &ReduceOp<T>) -> T {
    if values.len() == 1 {
        return values[0];
    }
    let (left, right) = values.split_at(tree_split(values.len()));
    op.apply(fold(left, op), fold(right, op))
}

struct Local<'a, T> {
    comm: &'a Communicator,
    rank: usize,
    dist: &'a Distribution,
    block: &'a [T],
    offset: usize,
    op: &'a ReduceOp<T>,
    inbox: HashMap<usize, VecDeque<T>>,
}

impl<T: Plain> Local<'_, T> {
    /// Nodes whose leftmost leaf is local but whose parent's is not, in
    /// ascending position, with the rank that needs each value (`None` for
    /// the root).
    fn tops(
        &self,
        lo: usize,
        hi: usize,
        parent: Option<usize>,
        out: &mut Vec<(usize, usize, Option<usize>)>,
    ) {
        let owner = self.dist.owner(lo);
        if owner == self.rank {
            out.push((lo, hi, parent));
            return;
        }
        let mine = self.dist.range(self.rank);
        if hi <= mine.start || lo >= mine.end {
            return;
        }
        let m = tree_split(hi - lo);
        self.tops(lo, lo + m, Some(owner), out);
        self.tops(lo + m, hi, Some(owner), out);
    }

    /// Value of a node whose leftmost leaf is local.
    fn eval(&mut self, lo: usize, hi: usize) -> Result<T> {
        let end = self.offset + self.block.len();
        if hi <= end {
            return Ok(fold(
                &self.block[lo - self.offset..hi - self.offset],
                self.op,
            ));
        }
        let m = tree_split(hi - lo);
        let left = self.eval(lo, lo + m)?;
        let right_owner = self.dist.owner(lo + m);
        let right = if right_owner == self.rank {
            self.eval(lo + m, hi)?
        } else {
            self.take(right_owner)?
        };
        Ok(self.op.apply(left, right))
    }

    fn take(&mut self, src: usize) -> Result<T> {
        if !self.inbox.contains_key(&src) {
            let values: Vec<T> =
                datatype::decode(&self.comm.internal_recv(src, tags::REPRODUCIBLE)?)?;
            self.inbox.insert(src, values.into());
        }
        self.inbox
            .get_mut(&src)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| {
                Error::Codec(CodecError::Malformed(format!(
                    "rank {src} sent fewer partial results than the tree requires"
                )))
            })
    }
}

/// Reduces a distributed array along the same tree as
/// [`canonical_tree_reduce`], so the result is bit-identical to the
/// sequential one for every group size and every contiguous distribution.
///
/// Rank `r` passes its block `dist.range(r)` of the global array. Each rank
/// folds the tree nodes whose leftmost element it holds, pulling partial
/// results for right children from the ranks holding them. Partials travel
/// only toward lower ranks, at most one message per pair of ranks.
///
/// Returns `Some(result)` on rank 0 and `None` elsewhere.
pub fn reproducible_reduce<T: Plain>(
    comm: &Communicator,
    block: &[T],
    dist: &Distribution,
    op: &ReduceOp<T>,
) -> Result<Option<T>> {
    let (rank, p) = comm.rank_and_size();
    if dist.size() != p {
        return Err(Error::InvalidArgument(format!(
            "distribution over {} ranks used on a group of {p}",
            dist.size()
        )));
    }
    if block.len() != dist.count(rank) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} holds {} element(s) but the distribution assigns {}",
            block.len(),
            dist.count(rank)
        )));
    }
    if dist.n() == 0 {
        return Err(Error::InvalidArgument(
            "a reduction needs at least one element".into(),
        ));
    }

    let mut local = Local {
        comm,
        rank,
        dist,
        block,
        offset: dist.range(rank).start,
        op,
        inbox: HashMap::new(),
    };
    let mut tops = Vec::new();
    if !block.is_empty() {
        local.tops(0, dist.n(), None, &mut tops);
    }
    let mut outgoing: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    let mut result = None;
    for (lo, hi, parent) in tops {
        let value = local.eval(lo, hi)?;
        match parent {
            Some(dst) => outgoing.entry(dst).or_default().push(value),
            None if rank == 0 => result = Some(value),
            None => outgoing.entry(0).or_default().push(value),
        }
    }
    for (dst, values) in outgoing {
        comm.internal_send(dst, tags::REPRODUCIBLE, datatype::encode(&values))?;
    }
    if rank == 0 && result.is_none() {
        result = Some(local.take(dist.owner(0))?);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_largest_power_of_two_below() {
        let expected = [
            (2, 1),
            (3, 2),
            (4, 2),
            (5, 4),
            (7, 4),
            (8, 4),
            (9, 8),
            (1000, 512),
        ];
        for (len, m) in expected {
            assert_eq!(tree_split(len), m, "len={len}");
        }
    }

    #[test]
    fn canonical_examples() {
        let sum = ReduceOp::<f64>::sum();
        assert_eq!(canonical_tree_reduce(&[2.5], &sum).unwrap(), 2.5);
        assert!(canonical_tree_reduce(&[] as &[f64], &sum).is_err());
        let join = |a: u64, b: u64| a * 100 + b;
        let tag = ReduceOp::custom(join, false);
        let v: Vec<u64> = (1..=7).collect();
        let expected = join(join(join(1, 2), join(3, 4)), join(join(5, 6), 7));
        assert_eq!(canonical_tree_reduce(&v, &tag).unwrap(), expected);
    }
}
