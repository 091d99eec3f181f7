use crate::communicator::{tags, Communicator, InternalTag};
use crate::datatype::{self, Plain};
use crate::error::{Error, Result};
use crate::params::{
    check_counts, exclusive_prefix_sum, Missing, OutKind, OutRequests, ResizePolicy, ResultBundle,
    Target,
};

use super::{agree, bcast_bytes, decode_checked, total, Common, RecvBuf};

/// Collects segments at `root`. The root reads `counts` to know which ranks
/// send; other ranks send their segment when it is non-empty.
fn gather_segments<T: Plain>(
    comm: &Communicator,
    root: usize,
    local: &[T],
    counts: &[i32],
    tag: InternalTag,
) -> Result<Vec<T>> {
    let (rank, p) = comm.rank_and_size();
    if rank != root {
        if !local.is_empty() {
            comm.internal_send(root, tag, datatype::encode(local))?;
        }
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(total(counts, "recv_counts")?);
    for (s, &count) in counts.iter().enumerate().take(p) {
        if s == root {
            out.extend_from_slice(local);
        } else if count > 0 {
            let bytes = comm.internal_recv(s, tag)?;
            out.extend(decode_checked::<T>(&bytes, count as usize, s, rank)?);
        }
    }
    Ok(out)
}

/// Broadcasts rank 0's concatenation of `n` elements to everyone.
fn share_from_zero<T: Plain>(comm: &Communicator, gathered: Vec<T>, n: usize) -> Result<Vec<T>> {
    if comm.rank() == 0 {
        bcast_bytes(comm, 0, Some(datatype::encode(&gathered)), tags::BCAST)?;
        Ok(gathered)
    } else {
        let bytes = bcast_bytes(comm, 0, None, tags::BCAST)?;
        decode_checked(&bytes, n, 0, comm.rank())
    }
}

/// Allgather of equal-sized contributions without any checks.
pub(crate) fn allgather_plain<T: Plain>(comm: &Communicator, local: &[T]) -> Result<Vec<T>> {
    let p = comm.size();
    let k = local.len();
    if p == 1 || k == 0 {
        return Ok(local.to_vec());
    }
    let counts = vec![k as i32; p];
    let gathered = gather_segments(comm, 0, local, &counts, tags::GATHER)?;
    share_from_zero(comm, gathered, k * p)
}

fn count_of(len: usize, param: &'static str) -> Result<i32> {
    i32::try_from(len).map_err(|_| Error::DisplacementOverflow { param })
}

/// Builder for [`Communicator::allgather`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Allgather<'c, 'b, T> {
    comm: &'c Communicator,
    common: Common,
    send_buf: Option<&'b [T]>,
    send_recv_buf: Option<Vec<T>>,
    recv_buf: RecvBuf<T>,
}

impl<'c, 'b, T: Plain> Allgather<'c, 'b, T> {
    pub(crate) fn new(comm: &'c Communicator) -> Self {
        Allgather {
            comm,
            common: Common::default(),
            send_buf: None,
            send_recv_buf: None,
            recv_buf: RecvBuf::default(),
        }
    }

    /// This rank's contribution; all ranks contribute the same number of
    /// elements.
    pub fn send_buf(mut self, buf: &'b [T]) -> Self {
        self.common.set(&mut self.send_buf, buf, "send_buf");
        self
    }

    /// In-place form: a buffer of `k * size` elements holding this rank's
    /// contribution at `k * rank .. k * (rank + 1)`. The filled buffer is
    /// returned.
    pub fn send_recv_buf(mut self, buf: Vec<T>) -> Self {
        self.common
            .set(&mut self.send_recv_buf, buf, "send_recv_buf");
        self
    }

    pub fn recv_buf(mut self, container: Vec<T>, policy: ResizePolicy) -> Self {
        self.recv_buf.set(&mut self.common, container, policy);
        self
    }

    common_setters!();

    pub fn call(self) -> Result<Vec<T>> {
        self.common.check()?;
        let comm = self.comm;
        let (rank, p) = comm.rank_and_size();
        let level = self.common.level(comm);
        let (local, in_place): (&[T], Option<&Vec<T>>) = match (&self.send_buf, &self.send_recv_buf)
        {
            (Some(_), Some(_)) => {
                return Err(Error::ConflictingParameters {
                    op: "allgather",
                    detail: "send_buf and send_recv_buf are mutually exclusive".into(),
                })
            }
            (None, None) => {
                return Err(Error::MissingParameters {
                    op: "allgather",
                    missing: vec!["send_buf or send_recv_buf"],
                })
            }
            (Some(b), None) => (b, None),
            (None, Some(buf)) => {
                let shape = if buf.len() % p != 0 {
                    Err(Error::InvalidArgument(format!(
                        "allgather: in-place buffer of length {} is not a multiple of the group size {p}",
                        buf.len()
                    )))
                } else {
                    Ok(())
                };
                if level.heavy() {
                    agree(comm, "allgather", shape)?;
                } else {
                    shape?;
                }
                let k = buf.len() / p;
                (&buf[k * rank..k * (rank + 1)], Some(buf))
            }
        };
        if in_place.is_some() && self.recv_buf.0.is_some() {
            return Err(Error::ConflictingParameters {
                op: "allgather",
                detail: "recv_buf cannot be combined with send_recv_buf".into(),
            });
        }
        if level.heavy() {
            let sizes = allgather_plain(comm, &[local.len() as u64])?;
            if let Some(s) = sizes.iter().position(|&n| n != sizes[0]) {
                return Err(Error::UnequalContributions {
                    op: "allgather",
                    detail: format!(
                        "rank 0 contributes {} element(s), rank {s} contributes {}",
                        sizes[0], sizes[s]
                    ),
                });
            }
        }
        let result = allgather_plain(comm, local)?;
        match self.send_recv_buf {
            Some(mut buf) => {
                buf.copy_from_slice(&result);
                Ok(buf)
            }
            None => self.recv_buf.finish(result),
        }
    }
}

/// Builder for [`Communicator::allgatherv`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Allgatherv<'c, 'b, T> {
    comm: &'c Communicator,
    common: Common,
    send_buf: Option<&'b [T]>,
    recv_counts: Option<Vec<i32>>,
    recv_buf: RecvBuf<T>,
    outs: OutRequests,
}

impl<'c, 'b, T: Plain> Allgatherv<'c, 'b, T> {
    pub(crate) fn new(comm: &'c Communicator) -> Self {
        Allgatherv {
            comm,
            common: Common::default(),
            send_buf: None,
            recv_counts: None,
            recv_buf: RecvBuf::default(),
            outs: OutRequests::default(),
        }
    }

    pub fn send_buf(mut self, buf: &'b [T]) -> Self {
        self.common.set(&mut self.send_buf, buf, "send_buf");
        self
    }

    /// Number of elements contributed by each rank. Inferred with one
    /// allgather when omitted.
    pub fn recv_counts(mut self, counts: Vec<i32>) -> Self {
        self.common
            .set(&mut self.recv_counts, counts, "recv_counts");
        self
    }

    pub fn recv_buf(mut self, container: Vec<T>, policy: ResizePolicy) -> Self {
        self.recv_buf.set(&mut self.common, container, policy);
        self
    }

    pub fn recv_counts_out(mut self) -> Self {
        self.outs.push(OutKind::RecvCounts, None);
        self
    }

    pub fn recv_counts_out_into(mut self, container: Vec<i32>, policy: ResizePolicy) -> Self {
        self.outs
            .push(OutKind::RecvCounts, Some(Target::new(container, policy)));
        self
    }

    pub fn recv_displs_out(mut self) -> Self {
        self.outs.push(OutKind::RecvDispls, None);
        self
    }

    pub fn recv_displs_out_into(mut self, container: Vec<i32>, policy: ResizePolicy) -> Self {
        self.outs
            .push(OutKind::RecvDispls, Some(Target::new(container, policy)));
        self
    }

    common_setters!();

    pub fn call(self) -> Result<ResultBundle<T>> {
        Missing::default()
            .require(&self.send_buf, "send_buf")
            .finish("allgatherv")?;
        self.common.check()?;
        self.outs.check()?;
        let comm = self.comm;
        let (rank, p) = comm.rank_and_size();
        let level = self.common.level(comm);
        let local = self.send_buf.expect("checked above");
        let len = count_of(local.len(), "send_buf")?;

        let counts = match self.recv_counts {
            Some(counts) if level.heavy() => {
                agree(comm, "allgatherv", check_counts(&counts, p, "recv_counts"))?;
                let actual = allgather_plain(comm, &[len])?;
                if let Some(s) = (0..p).find(|&s| actual[s] != counts[s]) {
                    return Err(Error::CountMismatch {
                        sender: s,
                        receiver: rank,
                        sent: actual[s] as i64,
                        expected: counts[s] as i64,
                    });
                }
                counts
            }
            Some(counts) => {
                if level.light() {
                    check_counts(&counts, p, "recv_counts")?;
                    if counts[rank] != len {
                        return Err(Error::CountMismatch {
                            sender: rank,
                            receiver: rank,
                            sent: len as i64,
                            expected: counts[rank] as i64,
                        });
                    }
                }
                counts
            }
            None => allgather_plain(comm, &[len])?,
        };
        let n = total(&counts, "recv_counts")?;
        let displs = exclusive_prefix_sum(&counts, "recv_displs")?;

        let payload = if p == 1 {
            local.to_vec()
        } else {
            let gathered = gather_segments(comm, 0, local, &counts, tags::GATHER)?;
            if n == 0 {
                Vec::new()
            } else {
                share_from_zero(comm, gathered, n)?
            }
        };
        let payload = self.recv_buf.finish(payload)?;
        self.outs.into_bundle(payload, |kind| match kind {
            OutKind::RecvCounts => counts.clone(),
            OutKind::RecvDispls => displs.clone(),
            _ => unreachable!("allgatherv only offers receive-side out-parameters"),
        })
    }
}

/// Builder for [`Communicator::gatherv`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Gatherv<'c, 'b, T> {
    comm: &'c Communicator,
    common: Common,
    send_buf: Option<&'b [T]>,
    root: Option<usize>,
    recv_counts: Option<Vec<i32>>,
    recv_buf: RecvBuf<T>,
    outs: OutRequests,
}

impl<'c, 'b, T: Plain> Gatherv<'c, 'b, T> {
    pub(crate) fn new(comm: &'c Communicator) -> Self {
        Gatherv {
            comm,
            common: Common::default(),
            send_buf: None,
            root: None,
            recv_counts: None,
            recv_buf: RecvBuf::default(),
            outs: OutRequests::default(),
        }
    }

    pub fn send_buf(mut self, buf: &'b [T]) -> Self {
        self.common.set(&mut self.send_buf, buf, "send_buf");
        self
    }

    /// Defaults to rank 0.
    pub fn root(mut self, root: usize) -> Self {
        self.common.set(&mut self.root, root, "root");
        self
    }

    /// Per-rank element counts. Only the root's values are read, but either
    /// every rank passes this parameter or none does; when omitted the root
    /// gathers the sizes first.
    pub fn recv_counts(mut self, counts: Vec<i32>) -> Self {
        self.common
            .set(&mut self.recv_counts, counts, "recv_counts");
        self
    }

    /// Only used at the root.
    pub fn recv_buf(mut self, container: Vec<T>, policy: ResizePolicy) -> Self {
        self.recv_buf.set(&mut self.common, container, policy);
        self
    }

    /// Filled at the root, empty elsewhere.
    pub fn recv_counts_out(mut self) -> Self {
        self.outs.push(OutKind::RecvCounts, None);
        self
    }

    /// Filled at the root, empty elsewhere.
    pub fn recv_displs_out(mut self) -> Self {
        self.outs.push(OutKind::RecvDispls, None);
        self
    }

    common_setters!();

    pub fn call(self) -> Result<ResultBundle<T>> {
        Missing::default()
            .require(&self.send_buf, "send_buf")
            .finish("gatherv")?;
        self.common.check()?;
        self.outs.check()?;
        let comm = self.comm;
        let (rank, p) = comm.rank_and_size();
        let level = self.common.level(comm);
        let root = self.root.unwrap_or(0);
        comm.check_rank(root)?;
        let local = self.send_buf.expect("checked above");
        let len = count_of(local.len(), "send_buf")?;
        let is_root = rank == root;

        let counts = match self.recv_counts {
            Some(counts) if level.heavy() => {
                let shape = if is_root {
                    check_counts(&counts, p, "recv_counts")
                } else {
                    Ok(())
                };
                agree(comm, "gatherv", shape)?;
                let actual = allgather_plain(comm, &[len])?;
                let verdict = if is_root {
                    let bad = (0..p).find(|&s| actual[s] != counts[s]);
                    let v = bad.map_or([-1i64, 0, 0], |s| {
                        [s as i64, actual[s] as i64, counts[s] as i64]
                    });
                    bcast_bytes(comm, root, Some(datatype::encode(&v)), tags::BCAST)?;
                    v
                } else {
                    let bytes = bcast_bytes(comm, root, None, tags::BCAST)?;
                    let v: Vec<i64> = datatype::decode(&bytes)?;
                    [v[0], v[1], v[2]]
                };
                if verdict[0] >= 0 {
                    return Err(Error::CountMismatch {
                        sender: verdict[0] as usize,
                        receiver: root,
                        sent: verdict[1],
                        expected: verdict[2],
                    });
                }
                counts
            }
            Some(counts) => {
                if is_root && level.light() {
                    check_counts(&counts, p, "recv_counts")?;
                    if counts[root] != len {
                        return Err(Error::CountMismatch {
                            sender: root,
                            receiver: root,
                            sent: len as i64,
                            expected: counts[root] as i64,
                        });
                    }
                }
                counts
            }
            None if is_root => {
                let mut counts = vec![0i32; p];
                for (s, slot) in counts.iter_mut().enumerate() {
                    *slot = if s == root {
                        len
                    } else {
                        let bytes = comm.internal_recv(s, tags::COUNTS)?;
                        decode_checked::<i32>(&bytes, 1, s, rank)?[0]
                    };
                }
                counts
            }
            None => {
                comm.internal_send(root, tags::COUNTS, datatype::encode(&[len]))?;
                Vec::new()
            }
        };

        let payload = gather_segments(comm, root, local, &counts, tags::GATHER)?;
        if !is_root {
            return self.outs.into_bundle(Vec::new(), |_| Vec::new());
        }
        let displs = exclusive_prefix_sum(&counts, "recv_displs")?;
        let payload = self.recv_buf.finish(payload)?;
        self.outs.into_bundle(payload, |kind| match kind {
            OutKind::RecvCounts => counts.clone(),
            OutKind::RecvDispls => displs.clone(),
            _ => unreachable!("gatherv only offers receive-side out-parameters"),
        })
    }
}
