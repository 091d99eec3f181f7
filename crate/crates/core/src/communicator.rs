//! A rank's handle to a group of ranks.
//!
//! Transport tags are partitioned as
//!
//! ```text
//! bit 31      protocol flag (barrier rounds, consensus)
//! bits 16..31 context id (15 bits)
//! bits 0..16  tag within the context
//! ```
//!
//! Every communicator owns two consecutive context ids: an even one for user
//! point-to-point traffic and the following odd one for collective and
//! plugin traffic. Sub-communicators get fresh ids from [`Communicator::split`],
//! so their messages never match the parent's.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::datatype::{self, Codec, Plain};
use crate::error::{Error, Result};
use crate::params::AssertionLevel;
use crate::transport::{Endpoint, SendHandle, Tag, TagFilter, PROTOCOL_TAG_BIT};

pub(crate) const WORLD_CONTEXT: u32 = 0;
pub(crate) const FIRST_FREE_CONTEXT: u32 = 2;
const MAX_CONTEXT: u32 = 0x7fff;
const CONTEXT_SHIFT: u32 = 16;
const CONTEXT_MASK: Tag = 0x7fff << CONTEXT_SHIFT;

/// Largest user tag.
pub const MAX_USER_TAG: u32 = 0xffff;

/// A tag inside a communicator's collective context.
///
/// Ids below `0x1000` are used by the built-in collectives; plugins pick
/// theirs from [`InternalTag::PLUGIN_BASE`] upwards. Protocol tags are
/// instrumented separately from payload traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InternalTag {
    id: u16,
    protocol: bool,
}

impl InternalTag {
    pub const PLUGIN_BASE: u16 = 0x1000;

    pub const fn payload(id: u16) -> Self {
        InternalTag {
            id,
            protocol: false,
        }
    }

    pub const fn protocol(id: u16) -> Self {
        InternalTag { id, protocol: true }
    }
}

pub(crate) mod tags {
    use super::InternalTag;

    pub const BCAST: InternalTag = InternalTag::payload(2);
    pub const GATHER: InternalTag = InternalTag::payload(3);
    pub const ALLTOALL: InternalTag = InternalTag::payload(4);
    pub const ALLTOALLV: InternalTag = InternalTag::payload(5);
    pub const REDUCE: InternalTag = InternalTag::payload(6);
    pub const COUNTS: InternalTag = InternalTag::payload(7);
    /// Barrier round `k` uses id `BARRIER_BASE + k`.
    pub const BARRIER_BASE: u16 = 0x0100;
}

#[derive(Debug)]
struct Membership {
    /// Transport rank of each local rank.
    members: Vec<usize>,
    /// Local rank of each transport rank, if a member.
    local_of: Vec<Option<usize>>,
}

/// Per-communicator knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Settings {
    pub assertion_level: AssertionLevel,
    /// Panic when a pending non-blocking result is dropped instead of
    /// completing it during cleanup.
    pub abort_on_drop: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            assertion_level: AssertionLevel::from_env(),
            abort_on_drop: false,
        }
    }
}

/// A received user message.
#[derive(Debug, Clone, PartialEq)]
pub struct Message<T> {
    pub src: usize,
    pub tag: u32,
    pub data: T,
}

/// One rank's view of a group: identity, sub-group splitting, barriers and
/// point-to-point messaging.
///
/// Cloning is cheap and yields a handle to the same communicator. A
/// communicator is driven by one worker at a time.
#[derive(Debug, Clone)]
pub struct Communicator {
    endpoint: Arc<Endpoint>,
    membership: Arc<Membership>,
    rank: usize,
    context: u32,
    settings: Settings,
    calls: Arc<AtomicU64>,
}

/// How long progress loops sleep when nothing happened.
pub(crate) const IDLE: Duration = Duration::from_millis(2);

impl Communicator {
    /// The communicator spanning every rank of the endpoint's group.
    pub fn world(endpoint: Arc<Endpoint>) -> Self {
        let size = endpoint.size();
        let rank = endpoint.rank();
        Communicator {
            membership: Arc::new(Membership {
                members: (0..size).collect(),
                local_of: (0..size).map(Some).collect(),
            }),
            endpoint,
            rank,
            context: WORLD_CONTEXT,
            settings: Settings::default(),
            calls: Arc::default(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.membership.members.len()
    }

    pub fn rank_and_size(&self) -> (usize, usize) {
        (self.rank, self.size())
    }

    pub fn endpoint(&self) -> &Arc<Endpoint> {
        &self.endpoint
    }

    /// Transport rank of local rank `rank`.
    pub fn transport_rank(&self, rank: usize) -> usize {
        self.membership.members[rank]
    }

    pub fn context_id(&self) -> u32 {
        self.context
    }

    pub fn settings(&self) -> Settings {
        self.settings
    }

    pub fn assertion_level(&self) -> AssertionLevel {
        self.settings.assertion_level
    }

    pub fn with_assertion_level(mut self, level: AssertionLevel) -> Self {
        self.settings.assertion_level = level;
        self
    }

    pub fn with_abort_on_drop(mut self, abort: bool) -> Self {
        self.settings.abort_on_drop = abort;
        self
    }

    /// Returns this communicator's running count of calls made through it
    /// and increments it. All members make the same sequence of collective
    /// calls, so the value agrees across ranks.
    pub fn next_call_index(&self) -> u64 {
        self.calls.fetch_add(1, Ordering::Relaxed)
    }

    pub fn check_rank(&self, rank: usize) -> Result<()> {
        crate::transport::check_rank(rank, self.size())
    }

    fn local_rank_of(&self, transport_rank: usize) -> usize {
        self.membership.local_of[transport_rank].expect("message from a non-member")
    }

    fn user_tag(&self, tag: u32) -> Result<Tag> {
        if tag > MAX_USER_TAG {
            return Err(Error::TagOutOfRange(tag));
        }
        Ok((self.context << CONTEXT_SHIFT) | tag)
    }

    fn user_filter(&self, tag: Option<u32>) -> Result<TagFilter> {
        match tag {
            Some(t) => Ok(TagFilter::exact(self.user_tag(t)?)),
            None => Ok(TagFilter::masked(
                self.context << CONTEXT_SHIFT,
                PROTOCOL_TAG_BIT | CONTEXT_MASK,
            )),
        }
    }

    fn internal_tag(&self, tag: InternalTag) -> Tag {
        let flag = if tag.protocol { PROTOCOL_TAG_BIT } else { 0 };
        flag | ((self.context + 1) << CONTEXT_SHIFT) | tag.id as Tag
    }

    fn src_filter(&self, src: Option<usize>) -> Result<Option<usize>> {
        src.map(|s| {
            self.check_rank(s)?;
            Ok(self.transport_rank(s))
        })
        .transpose()
    }

    // ---- user point-to-point -------------------------------------------

    /// Buffered send of raw bytes.
    pub fn send_bytes(&self, dst: usize, tag: u32, payload: Vec<u8>) -> Result<()> {
        self.check_rank(dst)?;
        self.endpoint
            .send(self.transport_rank(dst), self.user_tag(tag)?, payload)
    }

    /// Acknowledged send of raw bytes; see [`Endpoint::ssend_async`].
    pub fn ssend_bytes(&self, dst: usize, tag: u32, payload: Vec<u8>) -> Result<SendHandle> {
        self.check_rank(dst)?;
        self.endpoint
            .ssend_async(self.transport_rank(dst), self.user_tag(tag)?, payload)
    }

    /// Blocking receive of raw bytes; `None` filters match anything.
    pub fn recv_bytes(&self, src: Option<usize>, tag: Option<u32>) -> Result<Message<Vec<u8>>> {
        let env = self
            .endpoint
            .recv_filtered(self.src_filter(src)?, self.user_filter(tag)?)?;
        Ok(self.to_message(env))
    }

    pub fn try_recv_bytes(
        &self,
        src: Option<usize>,
        tag: Option<u32>,
    ) -> Result<Option<Message<Vec<u8>>>> {
        let env = self
            .endpoint
            .try_recv_filtered(self.src_filter(src)?, self.user_filter(tag)?)?;
        Ok(env.map(|e| self.to_message(e)))
    }

    /// `(source, tag, byte length)` of the first matching pending message.
    pub fn probe(
        &self,
        src: Option<usize>,
        tag: Option<u32>,
    ) -> Result<Option<(usize, u32, usize)>> {
        let info = self
            .endpoint
            .probe_filtered(self.src_filter(src)?, self.user_filter(tag)?);
        Ok(info.map(|i| (self.local_rank_of(i.src), i.tag & MAX_USER_TAG, i.len)))
    }

    fn to_message(&self, env: crate::transport::Envelope) -> Message<Vec<u8>> {
        Message {
            src: self.local_rank_of(env.src),
            tag: env.tag & MAX_USER_TAG,
            data: env.payload,
        }
    }

    /// Sends a sequence of plain elements.
    pub fn send_typed<T: Plain>(&self, dst: usize, tag: u32, values: &[T]) -> Result<()> {
        self.send_bytes(dst, tag, datatype::encode(values))
    }

    /// Receives a sequence of plain elements.
    pub fn recv_typed<T: Plain>(&self, src: Option<usize>, tag: Option<u32>) -> Result<Vec<T>> {
        Ok(self.recv_typed_message(src, tag)?.data)
    }

    pub fn recv_typed_message<T: Plain>(
        &self,
        src: Option<usize>,
        tag: Option<u32>,
    ) -> Result<Message<Vec<T>>> {
        let m = self.recv_bytes(src, tag)?;
        Ok(Message {
            src: m.src,
            tag: m.tag,
            data: datatype::decode(&m.data)?,
        })
    }

    /// Sends any payload value, e.g. a [`Serialized`](crate::serialization::Serialized) one.
    pub fn send_value<C: Codec>(&self, dst: usize, tag: u32, value: &C) -> Result<()> {
        self.send_bytes(dst, tag, value.encode_payload()?)
    }

    pub fn recv_value<C: Codec>(&self, src: Option<usize>, tag: Option<u32>) -> Result<C> {
        Ok(C::decode_payload(&self.recv_bytes(src, tag)?.data)?)
    }

    // ---- collective-context channel --------------------------------------

    /// Buffered send in the collective context. Meant for collective and
    /// plugin implementations.
    pub fn internal_send(&self, dst: usize, tag: InternalTag, payload: Vec<u8>) -> Result<()> {
        self.check_rank(dst)?;
        self.endpoint
            .send(self.transport_rank(dst), self.internal_tag(tag), payload)
    }

    pub fn internal_ssend(
        &self,
        dst: usize,
        tag: InternalTag,
        payload: Vec<u8>,
    ) -> Result<SendHandle> {
        self.check_rank(dst)?;
        self.endpoint
            .ssend_async(self.transport_rank(dst), self.internal_tag(tag), payload)
    }

    pub fn internal_recv(&self, src: usize, tag: InternalTag) -> Result<Vec<u8>> {
        self.check_rank(src)?;
        Ok(self
            .endpoint
            .recv(Some(self.transport_rank(src)), Some(self.internal_tag(tag)))?
            .payload)
    }

    /// Non-blocking receive in the collective context; yields the local
    /// source rank and payload.
    pub fn internal_try_recv(
        &self,
        src: Option<usize>,
        tag: InternalTag,
    ) -> Result<Option<(usize, Vec<u8>)>> {
        let env = self
            .endpoint
            .try_recv(self.src_filter(src)?, Some(self.internal_tag(tag)))?;
        Ok(env.map(|e| (self.local_rank_of(e.src), e.payload)))
    }

    /// Sleeps briefly unless transport activity happened since `mark`.
    pub fn idle_since(&self, mark: u64) {
        self.endpoint.wait_activity(mark, IDLE)
    }

    // ---- groups ----------------------------------------------------------

    /// Collectively partitions the group: members passing the same `color`
    /// form a new communicator, ranked by ascending `(key, parent rank)`.
    pub fn split(&self, color: i64, key: i64) -> Result<Communicator> {
        let next = self.endpoint.next_context.load(Ordering::SeqCst);
        let all = crate::collectives::allgather_plain(self, &[(color, key, next)])?;
        let context = all.iter().map(|&(_, _, n)| n).max().unwrap_or(next);
        if context + 1 > MAX_CONTEXT {
            return Err(Error::ContextExhausted);
        }
        self.endpoint
            .next_context
            .fetch_max(context + 2, Ordering::SeqCst);

        let mut group: Vec<(i64, usize)> = all
            .iter()
            .enumerate()
            .filter(|(_, &(c, _, _))| c == color)
            .map(|(parent_rank, &(_, k, _))| (k, parent_rank))
            .collect();
        group.sort_unstable();

        let world = self.endpoint.size();
        let mut local_of = vec![None; world];
        let members: Vec<usize> = group
            .iter()
            .map(|&(_, parent_rank)| self.transport_rank(parent_rank))
            .collect();
        for (local, &t) in members.iter().enumerate() {
            local_of[t] = Some(local);
        }
        let rank = group
            .iter()
            .position(|&(_, pr)| pr == self.rank)
            .expect("caller belongs to its own color");
        Ok(Communicator {
            endpoint: Arc::clone(&self.endpoint),
            membership: Arc::new(Membership { members, local_of }),
            rank,
            context,
            settings: self.settings,
            calls: Arc::default(),
        })
    }

    /// Blocks until every member has entered the barrier.
    pub fn barrier(&self) -> Result<()> {
        let mut state = BarrierState::new(self);
        state.run_blocking(self)
    }
}

/// Dissemination barrier: in round `k`, rank `r` signals `r + 2^k` and waits
/// for `r - 2^k` (mod p). After `ceil(log2 p)` rounds every rank has
/// transitively heard from every other.
#[derive(Debug)]
pub(crate) struct BarrierState {
    round: u32,
    signalled: bool,
    rounds: u32,
}

impl BarrierState {
    pub(crate) fn new(comm: &Communicator) -> Self {
        let p = comm.size();
        let rounds = if p <= 1 {
            0
        } else {
            usize::BITS - (p - 1).leading_zeros()
        };
        BarrierState {
            round: 0,
            signalled: false,
            rounds,
        }
    }

    fn peers(&self, comm: &Communicator) -> (usize, usize, InternalTag) {
        let (r, p) = comm.rank_and_size();
        let dist = 1usize << self.round;
        (
            (r + dist) % p,
            (r + p - dist % p) % p,
            InternalTag::protocol(tags::BARRIER_BASE + self.round as u16),
        )
    }

    pub(crate) fn is_done(&self) -> bool {
        self.round >= self.rounds
    }

    /// Advances as far as possible without blocking. Returns true once
    /// complete.
    pub(crate) fn poll(&mut self, comm: &Communicator) -> Result<bool> {
        while !self.is_done() {
            let (to, from, tag) = self.peers(comm);
            if !self.signalled {
                comm.internal_send(to, tag, Vec::new())?;
                self.signalled = true;
            }
            if comm.internal_try_recv(Some(from), tag)?.is_none() {
                return Ok(false);
            }
            self.round += 1;
            self.signalled = false;
        }
        Ok(true)
    }

    pub(crate) fn run_blocking(&mut self, comm: &Communicator) -> Result<()> {
        while !self.is_done() {
            let (to, from, tag) = self.peers(comm);
            if !self.signalled {
                comm.internal_send(to, tag, Vec::new())?;
            }
            comm.internal_recv(from, tag)?;
            self.round += 1;
            self.signalled = false;
        }
        Ok(())
    }
}
