use crate::communicator::{tags, Communicator, InternalTag};
use crate::datatype::Codec;
use crate::error::Result;
use crate::params::Missing;

use super::Common;

/// Binomial-tree broadcast of raw bytes from `root`. `data` is only read at
/// the root. Every non-root receives exactly one envelope, even when the
/// payload is empty.
pub(crate) fn bcast_bytes(
    comm: &Communicator,
    root: usize,
    data: Option<Vec<u8>>,
    tag: InternalTag,
) -> Result<Vec<u8>> {
    let (rank, p) = comm.rank_and_size();
    comm.check_rank(root)?;
    let vr = (rank + p - root) % p;
    let real = |v: usize| (v + root) % p;

    let mut mask = 1usize;
    let mut data = data.filter(|_| vr == 0).unwrap_or_default();
    while mask < p {
        if vr & mask != 0 {
            data = comm.internal_recv(real(vr - mask), tag)?;
            break;
        }
        mask <<= 1;
    }
    mask >>= 1;
    while mask > 0 {
        if vr + mask < p {
            comm.internal_send(real(vr + mask), tag, data.clone())?;
        }
        mask >>= 1;
    }
    Ok(data)
}

/// Builder for [`Communicator::bcast`].
#[must_use = "a collective does nothing until `call` is invoked"]
pub struct Bcast<'c, C> {
    comm: &'c Communicator,
    common: Common,
    buf: Option<C>,
    root: Option<usize>,
}

impl<'c, C: Codec> Bcast<'c, C> {
    pub(crate) fn new(comm: &'c Communicator) -> Self {
        Bcast {
            comm,
            common: Common::default(),
            buf: None,
            root: None,
        }
    }

    /// The value to broadcast at the root; a placeholder such as an empty
    /// vector or [`as_deserializable`](crate::serialization::as_deserializable)
    /// elsewhere.
    pub fn send_recv_buf(mut self, buf: C) -> Self {
        self.common.set(&mut self.buf, buf, "send_recv_buf");
        self
    }

    /// Defaults to rank 0.
    pub fn root(mut self, root: usize) -> Self {
        self.common.set(&mut self.root, root, "root");
        self
    }

    common_setters!();

    pub fn call(self) -> Result<C> {
        Missing::default()
            .require(&self.buf, "send_recv_buf")
            .finish("bcast")?;
        self.common.check()?;
        let buf = self.buf.expect("checked above");
        let root = self.root.unwrap_or(0);
        self.comm.check_rank(root)?;
        if self.comm.size() == 1 {
            return Ok(buf);
        }
        if self.comm.rank() == root {
            bcast_bytes(self.comm, root, Some(buf.encode_payload()?), tags::BCAST)?;
            Ok(buf)
        } else {
            let bytes = bcast_bytes(self.comm, root, None, tags::BCAST)?;
            Ok(C::decode_payload(&bytes)?)
        }
    }
}
