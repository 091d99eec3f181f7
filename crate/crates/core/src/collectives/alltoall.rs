use crate::communicator::{tags, Communicator};
use crate::datatype::{self, Plain};
use crate::error::{Error, Result};
use crate::params::{
    check_counts, exclusive_prefix_sum, validate_counts, Missing, OutKind, OutRequests,
    ResizePolicy, ResultBundle, Target,
};

use super::{agree, allgather_plain, decode_checked, Common, RecvBuf};

/// Regular transpose of `k`-element blocks without any checks.
pub(crate) fn alltoall_plain<T: Plain>(
    comm: &Communicator,
    data: &[T],
    k: usize,
) -> Result<Vec<T>> {
    let (rank, p) = comm.rank_and_size();
    debug_assert_eq!(data.len(), k * p);
    if k == 0 {
        return Ok(Vec::new());
    }
    for d in (0..p).filter(|&d| d != rank) {
        comm.internal_send(
            d,
            tags::ALLTOALL,
            datatype::encode(&data[d * k..(d + 1) * k]),
        )?;
    }
    let mut out = Vec::with_capacity(k * p);
    for s in 0..p {
        if s == rank {
            out.extend_from_slice(&data[rank * k..(rank + 1) * k]);
        } else {
            let bytes = comm.internal_recv(s, tags::ALLTOALL)?;
            out.extend(decode_checked::<T>(&bytes, k, s, rank)?);
        }
    }
    Ok(out)
}

/// Builder for [`Communicator::alltoall`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Alltoall<'c, 'b, T> {
    comm: &'c Communicator,
    common: Common,
    send_buf: Option<&'b [T]>,
    recv_buf: RecvBuf<T>,
}

impl<'c, 'b, T: Plain> Alltoall<'c, 'b, T> {
    pub(crate) fn new(comm: &'c Communicator) -> Self {
        Alltoall {
            comm,
            common: Common::default(),
            send_buf: None,
            recv_buf: RecvBuf::default(),
        }
    }

    /// `size` consecutive blocks of equal length; block `i` goes to rank `i`.
    pub fn send_buf(mut self, buf: &'b [T]) -> Self {
        self.common.set(&mut self.send_buf, buf, "send_buf");
        self
    }

    pub fn recv_buf(mut self, container: Vec<T>, policy: ResizePolicy) -> Self {
        self.recv_buf.set(&mut self.common, container, policy);
        self
    }

    common_setters!();

    pub fn call(self) -> Result<Vec<T>> {
        Missing::default()
            .require(&self.send_buf, "send_buf")
            .finish("alltoall")?;
        self.common.check()?;
        let comm = self.comm;
        let p = comm.size();
        let data = self.send_buf.expect("checked above");
        let heavy = self.common.level(comm).heavy();
        let shape = if !data.len().is_multiple_of(p) {
            Err(Error::InvalidArgument(format!(
                "alltoall: send_buf length {} is not a multiple of the group size {p}",
                data.len()
            )))
        } else {
            Ok(())
        };
        if heavy {
            agree(comm, "alltoall", shape)?;
        } else {
            shape?;
        }
        let k = data.len() / p;
        if heavy {
            let ks = allgather_plain(comm, &[k as u64])?;
            if let Some(s) = ks.iter().position(|&x| x != ks[0]) {
                return Err(Error::UnequalContributions {
                    op: "alltoall",
                    detail: format!(
                        "rank 0 sends blocks of {} element(s), rank {s} blocks of {}",
                        ks[0], ks[s]
                    ),
                });
            }
        }
        let out = alltoall_plain(comm, data, k)?;
        self.recv_buf.finish(out)
    }
}

/// Builder for [`Communicator::alltoallv`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Alltoallv<'c, 'b, T> {
    comm: &'c Communicator,
    common: Common,
    send_buf: Option<&'b [T]>,
    send_counts: Option<&'b [i32]>,
    send_displs: Option<&'b [i32]>,
    recv_counts: Option<Vec<i32>>,
    recv_displs: Option<Vec<i32>>,
    recv_buf: RecvBuf<T>,
    outs: OutRequests,
}

fn check_segments(counts: &[i32], displs: &[i32], len: usize, param: &'static str) -> Result<()> {
    for (index, (&c, &d)) in counts.iter().zip(displs).enumerate() {
        let end = d as i64 + c as i64;
        if d < 0 || end > len as i64 {
            return Err(Error::SegmentOutOfRange {
                param,
                index,
                displ: d,
                end,
                len,
            });
        }
    }
    Ok(())
}

impl<'c, 'b, T: Plain> Alltoallv<'c, 'b, T> {
    pub(crate) fn new(comm: &'c Communicator) -> Self {
        Alltoallv {
            comm,
            common: Common::default(),
            send_buf: None,
            send_counts: None,
            send_displs: None,
            recv_counts: None,
            recv_displs: None,
            recv_buf: RecvBuf::default(),
            outs: OutRequests::default(),
        }
    }

    pub fn send_buf(mut self, buf: &'b [T]) -> Self {
        self.common.set(&mut self.send_buf, buf, "send_buf");
        self
    }

    /// Elements destined for each rank.
    pub fn send_counts(mut self, counts: &'b [i32]) -> Self {
        self.common
            .set(&mut self.send_counts, counts, "send_counts");
        self
    }

    /// Start of each rank's segment in `send_buf`; packed by default.
    pub fn send_displs(mut self, displs: &'b [i32]) -> Self {
        self.common
            .set(&mut self.send_displs, displs, "send_displs");
        self
    }

    /// Elements arriving from each rank. Inferred with one alltoall of the
    /// send counts when omitted.
    pub fn recv_counts(mut self, counts: Vec<i32>) -> Self {
        self.common
            .set(&mut self.recv_counts, counts, "recv_counts");
        self
    }

    /// Where each rank's segment lands in the receive buffer; packed in
    /// source order by default.
    pub fn recv_displs(mut self, displs: Vec<i32>) -> Self {
        self.common
            .set(&mut self.recv_displs, displs, "recv_displs");
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

    pub fn send_displs_out(mut self) -> Self {
        self.outs.push(OutKind::SendDispls, None);
        self
    }

    common_setters!();

    pub fn call(self) -> Result<ResultBundle<T>> {
        Missing::default()
            .require(&self.send_buf, "send_buf")
            .require(&self.send_counts, "send_counts")
            .finish("alltoallv")?;
        self.common.check()?;
        self.outs.check()?;
        let comm = self.comm;
        let (rank, p) = comm.rank_and_size();
        let level = self.common.level(comm);
        let data = self.send_buf.expect("checked above");
        let send_counts = self.send_counts.expect("checked above");

        validate_counts(comm, send_counts, self.recv_counts.as_deref(), level)?;
        check_counts(send_counts, p, "send_counts")?;
        let send_displs = match self.send_displs {
            Some(d) => {
                check_counts(d, p, "send_displs")?;
                d.to_vec()
            }
            None => exclusive_prefix_sum(send_counts, "send_displs")?,
        };
        check_segments(send_counts, &send_displs, data.len(), "send_buf")?;

        let recv_counts = match self.recv_counts {
            Some(c) => {
                check_counts(&c, p, "recv_counts")?;
                c
            }
            None => alltoall_plain(comm, send_counts, 1)?,
        };
        let recv_displs = match self.recv_displs {
            Some(d) => {
                check_counts(&d, p, "recv_displs")?;
                d
            }
            None => exclusive_prefix_sum(&recv_counts, "recv_displs")?,
        };
        let required = recv_counts
            .iter()
            .zip(&recv_displs)
            .map(|(&c, &d)| d as i64 + c as i64)
            .max()
            .unwrap_or(0);
        let required = usize::try_from(required)
            .ok()
            .filter(|&r| r <= i32::MAX as usize)
            .ok_or(Error::DisplacementOverflow {
                param: "recv_displs",
            })?;

        let segment = |i: usize| {
            let d = send_displs[i] as usize;
            &data[d..d + send_counts[i] as usize]
        };
        for dst in (0..p).filter(|&d| d != rank && send_counts[d] > 0) {
            comm.internal_send(dst, tags::ALLTOALLV, datatype::encode(segment(dst)))?;
        }
        let mut out = self.recv_buf.prepare(required)?;
        for src in 0..p {
            let count = recv_counts[src] as usize;
            let at = recv_displs[src] as usize;
            if src == rank {
                if count != send_counts[rank] as usize {
                    return Err(Error::CountMismatch {
                        sender: rank,
                        receiver: rank,
                        sent: send_counts[rank] as i64,
                        expected: count as i64,
                    });
                }
                out[at..at + count].copy_from_slice(segment(rank));
            } else if count > 0 {
                let bytes = comm.internal_recv(src, tags::ALLTOALLV)?;
                if bytes.len() != count * T::WIDTH {
                    return Err(Error::CountMismatch {
                        sender: src,
                        receiver: rank,
                        sent: datatype::element_count::<T>(bytes.len())? as i64,
                        expected: count as i64,
                    });
                }
                datatype::decode_into(&bytes, &mut out[at..at + count])?;
            }
        }
        self.outs.into_bundle(out, |kind| match kind {
            OutKind::RecvCounts => recv_counts.clone(),
            OutKind::RecvDispls => recv_displs.clone(),
            OutKind::SendDispls => send_displs.clone(),
            OutKind::SendCounts => send_counts.to_vec(),
        })
    }
}
