//! Non-blocking operations whose results are only reachable after completion.
//!
//! A [`NonBlockingResult`] owns everything the operation needs, including
//! buffers handed over at initiation. The only ways to reach its value are
//! [`NonBlockingResult::wait`] and a successful [`NonBlockingResult::test`],
//! so a pending buffer can never be observed. Progress is made only inside
//! these calls (and in [`RequestPool::wait_all`]); there is no background
//! progress.
//!
//! ```
//! use commkit::{run_world, TransportConfig};
//!
//! run_world(2, &TransportConfig::inproc(), |comm| {
//!     if comm.rank() == 0 {
//!         let r = comm.isend(1, 0, vec![1u32, 2, 3]).unwrap();
//!         let v = r.wait().unwrap(); // the buffer comes back once sent
//!         assert_eq!(v, vec![1, 2, 3]);
//!     } else {
//!         let r = comm.irecv::<u32>().source(0).recv_count(3).start().unwrap();
//!         assert_eq!(r.wait().unwrap(), vec![1, 2, 3]);
//!     }
//! })
//! .unwrap();
//! ```

use std::fmt;

use crate::communicator::{BarrierState, Communicator};
use crate::datatype::{self, Plain};
use crate::error::{Error, Result};
use crate::transport::SendHandle;

/// The progress engine behind a [`NonBlockingResult`].
pub trait PendingOp<T>: Send {
    /// Advances without blocking; yields the value once complete. Called
    /// again only while it returns `Ok(None)`.
    fn progress(&mut self) -> Result<Option<T>>;

    /// The communicator whose transport activity can unblock this operation.
    fn communicator(&self) -> &Communicator;
}

/// A pending operation together with the buffers it holds.
///
/// A buffer passed to a non-blocking call moves into the result, so it
/// cannot be touched until it comes back:
///
/// ```compile_fail
/// use commkit::{run_world, TransportConfig};
///
/// run_world(2, &TransportConfig::inproc(), |comm| {
///     let buf = vec![1u8, 2, 3];
///     let pending = comm.isend(1 - comm.rank(), 0, buf).unwrap();
///     println!("{}", buf.len());
///     pending.wait().unwrap();
/// })
/// .unwrap();
/// ```
#[must_use = "a pending result completes only through wait or test"]
pub struct NonBlockingResult<T> {
    op: Option<Box<dyn PendingOp<T>>>,
    abort_on_drop: bool,
}

impl<T> fmt::Debug for NonBlockingResult<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonBlockingResult")
            .field("pending", &self.op.is_some())
            .finish()
    }
}

impl<T: 'static> NonBlockingResult<T> {
    pub fn new(op: impl PendingOp<T> + 'static) -> Self {
        let abort_on_drop = op.communicator().settings().abort_on_drop;
        NonBlockingResult {
            op: Some(Box::new(op)),
            abort_on_drop,
        }
    }
}

fn drive<T>(op: &mut dyn PendingOp<T>) -> Result<T> {
    loop {
        let mark = op.communicator().endpoint().activity();
        if let Some(v) = op.progress()? {
            return Ok(v);
        }
        op.communicator().idle_since(mark);
    }
}

impl<T> NonBlockingResult<T> {
    /// Blocks, driving progress, until the operation completes.
    pub fn wait(mut self) -> Result<T> {
        let mut op = self.op.take().ok_or(Error::AlreadyConsumed)?;
        drive(op.as_mut())
    }

    /// One progress step. Returns the value exactly once, on the call that
    /// observes completion; later calls fail with
    /// [`Error::AlreadyConsumed`].
    pub fn test(&mut self) -> Result<Option<T>> {
        let op = self.op.as_mut().ok_or(Error::AlreadyConsumed)?;
        let out = op.progress()?;
        if out.is_some() {
            self.op = None;
        }
        Ok(out)
    }

    /// True until the value has been handed out.
    pub fn is_pending(&self) -> bool {
        self.op.is_some()
    }
}

impl<T> Drop for NonBlockingResult<T> {
    fn drop(&mut self) {
        let Some(mut op) = self.op.take() else {
            return;
        };
        if std::thread::panicking() {
            return;
        }
        if self.abort_on_drop {
            panic!("a pending non-blocking result was dropped without being completed");
        }
        let _ = drive(op.as_mut());
    }
}

struct Isend<T> {
    comm: Communicator,
    buf: Option<Vec<T>>,
    handle: Option<SendHandle>,
}

impl<T: Plain> PendingOp<Vec<T>> for Isend<T> {
    fn progress(&mut self) -> Result<Option<Vec<T>>> {
        if self.handle.as_ref().is_some_and(|h| !h.is_complete()) {
            return Ok(None);
        }
        Ok(self.buf.take())
    }

    fn communicator(&self) -> &Communicator {
        &self.comm
    }
}

/// Builder for [`Communicator::irecv`].
#[must_use = "call start() to post the receive"]
pub struct Irecv<'c, T> {
    comm: &'c Communicator,
    src: Option<usize>,
    tag: Option<u32>,
    count: Option<usize>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Plain> Irecv<'_, T> {
    /// Matches any source when not set.
    pub fn source(mut self, src: usize) -> Self {
        self.src = Some(src);
        self
    }

    /// Matches any tag when not set.
    pub fn tag(mut self, tag: u32) -> Self {
        self.tag = Some(tag);
        self
    }

    /// Expected number of elements; a different arrival is an error.
    pub fn recv_count(mut self, count: usize) -> Self {
        self.count = Some(count);
        self
    }

    pub fn start(self) -> Result<NonBlockingResult<Vec<T>>> {
        if let Some(s) = self.src {
            self.comm.check_rank(s)?;
        }
        if let Some(t) = self.tag {
            if t > crate::communicator::MAX_USER_TAG {
                return Err(Error::TagOutOfRange(t));
            }
        }
        Ok(NonBlockingResult::new(IrecvOp::<T> {
            comm: self.comm.clone(),
            src: self.src,
            tag: self.tag,
            count: self.count,
            _t: std::marker::PhantomData,
        }))
    }
}

struct IrecvOp<T> {
    comm: Communicator,
    src: Option<usize>,
    tag: Option<u32>,
    count: Option<usize>,
    _t: std::marker::PhantomData<fn() -> T>,
}

impl<T: Plain> PendingOp<Vec<T>> for IrecvOp<T> {
    fn progress(&mut self) -> Result<Option<Vec<T>>> {
        let Some(msg) = self.comm.try_recv_bytes(self.src, self.tag)? else {
            return Ok(None);
        };
        let values: Vec<T> = datatype::decode(&msg.data)?;
        if let Some(expected) = self.count {
            if values.len() != expected {
                return Err(Error::CountMismatch {
                    sender: msg.src,
                    receiver: self.comm.rank(),
                    sent: values.len() as i64,
                    expected: expected as i64,
                });
            }
        }
        Ok(Some(values))
    }

    fn communicator(&self) -> &Communicator {
        &self.comm
    }
}

struct Ibarrier {
    comm: Communicator,
    state: BarrierState,
}

impl PendingOp<()> for Ibarrier {
    fn progress(&mut self) -> Result<Option<()>> {
        Ok(self.state.poll(&self.comm)?.then_some(()))
    }

    fn communicator(&self) -> &Communicator {
        &self.comm
    }
}

impl Communicator {
    /// Buffered non-blocking send. The buffer is held until completion and
    /// handed back unchanged by `wait`.
    pub fn isend<T: Plain>(
        &self,
        dst: usize,
        tag: u32,
        buf: Vec<T>,
    ) -> Result<NonBlockingResult<Vec<T>>> {
        self.send_bytes(dst, tag, datatype::encode(&buf))?;
        Ok(NonBlockingResult::new(Isend {
            comm: self.clone(),
            buf: Some(buf),
            handle: None,
        }))
    }

    /// Synchronous non-blocking send: completes once the destination has
    /// received the message.
    pub fn issend<T: Plain>(
        &self,
        dst: usize,
        tag: u32,
        buf: Vec<T>,
    ) -> Result<NonBlockingResult<Vec<T>>> {
        let handle = self.ssend_bytes(dst, tag, datatype::encode(&buf))?;
        Ok(NonBlockingResult::new(Isend {
            comm: self.clone(),
            buf: Some(buf),
            handle: Some(handle),
        }))
    }

    /// Non-blocking receive; the message is matched when the result makes
    /// progress.
    pub fn irecv<T: Plain>(&self) -> Irecv<'_, T> {
        Irecv {
            comm: self,
            src: None,
            tag: None,
            count: None,
            _t: std::marker::PhantomData,
        }
    }

    /// Non-blocking barrier. Completes only after every member has called
    /// `ibarrier`; its rounds advance inside `test` and `wait`.
    pub fn ibarrier(&self) -> Result<NonBlockingResult<()>> {
        let mut op = Ibarrier {
            comm: self.clone(),
            state: BarrierState::new(self),
        };
        // Posts the first round's signal so peers can progress.
        op.state.poll(&op.comm)?;
        Ok(NonBlockingResult::new(op))
    }
}

/// Completes many non-blocking results together.
pub struct RequestPool<T> {
    pending: Vec<NonBlockingResult<T>>,
}

impl<T> Default for RequestPool<T> {
    fn default() -> Self {
        RequestPool {
            pending: Vec::new(),
        }
    }
}

impl<T> fmt::Debug for RequestPool<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RequestPool")
            .field("pending", &self.pending.len())
            .finish()
    }
}

impl<T> RequestPool<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a result; returns its submission index.
    pub fn submit(&mut self, result: NonBlockingResult<T>) -> usize {
        self.pending.push(result);
        self.pending.len() - 1
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Completes every submitted result and returns their values in
    /// submission order. The pool is empty afterwards.
    ///
    /// Results are tested round-robin, and an operation that depends on a
    /// later one does not stall the pool.
    pub fn wait_all(&mut self) -> Result<Vec<T>> {
        let mut pending = std::mem::take(&mut self.pending);
        let mut values: Vec<Option<T>> = pending.iter().map(|_| None).collect();
        let mut open = pending.len();
        while open > 0 {
            let mark = pending
                .iter()
                .find_map(|r| r.op.as_ref())
                .map(|op| op.communicator().endpoint().activity());
            for (slot, result) in values.iter_mut().zip(pending.iter_mut()) {
                if slot.is_none() {
                    if let Some(v) = result.test()? {
                        *slot = Some(v);
                        open -= 1;
                    }
                }
            }
            if open > 0 {
                if let (Some(mark), Some(op)) = (mark, pending.iter().find_map(|r| r.op.as_ref())) {
                    op.communicator().idle_since(mark);
                }
            }
        }
        Ok(values
            .into_iter()
            .map(|v| v.expect("all completed"))
            .collect())
    }
}
