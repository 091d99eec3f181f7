//! Point-to-point message layer.
//!
//! A rank group is a set of [`Endpoint`]s, one per rank, that can exchange
//! tagged byte envelopes. Two link kinds exist: in-process (mailboxes shared
//! between threads) and TCP (one socket per ordered pair of ranks, usable
//! across OS processes). Both share the same matching rules: a receive takes
//! the oldest pending envelope accepted by its `(source, tag)` filter, so
//! delivery is FIFO per channel.
//!
//! Sends are buffered and never wait for the receiver. [`Endpoint::ssend_async`]
//! additionally returns a handle that completes only once the destination has
//! consumed the envelope.

mod mailbox;
mod tcp;
pub mod wire;

use std::collections::BTreeSet;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener};
use std::sync::atomic::AtomicU32;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};
use mailbox::{Ack, Incoming, Mailbox, SendState, Wait};
use tcp::TcpLinks;

pub type Tag = u32;

/// Tags with this bit set are protocol traffic (barrier rounds and other
/// consensus messages). They are counted apart from payload envelopes.
pub const PROTOCOL_TAG_BIT: Tag = 1 << 31;

/// Accepts tags `t` with `t & mask == value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFilter {
    value: Tag,
    mask: Tag,
}

impl TagFilter {
    pub const ANY: TagFilter = TagFilter { value: 0, mask: 0 };

    pub const fn exact(tag: Tag) -> Self {
        TagFilter {
            value: tag,
            mask: Tag::MAX,
        }
    }

    pub const fn masked(value: Tag, mask: Tag) -> Self {
        TagFilter {
            value: value & mask,
            mask,
        }
    }

    pub fn accepts(&self, tag: Tag) -> bool {
        tag & self.mask == self.value
    }
}

impl From<Option<Tag>> for TagFilter {
    fn from(tag: Option<Tag>) -> Self {
        tag.map_or(TagFilter::ANY, TagFilter::exact)
    }
}

/// A point-to-point message unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub src: usize,
    pub dst: usize,
    pub tag: Tag,
    pub payload: Vec<u8>,
}

/// Metadata of a pending envelope, as reported by [`Endpoint::probe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeInfo {
    pub src: usize,
    pub tag: Tag,
    pub len: usize,
}

/// Per-rank send counters for one measurement window.
///
/// `messages_sent` and `bytes_sent` cover payload envelopes (self-sends
/// included); protocol envelopes are counted in `protocol_messages_sent`.
/// `distinct_destinations` counts the distinct *other* ranks contacted by any
/// envelope. Acknowledgement frames are transport-internal and not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransportStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub distinct_destinations: u64,
    pub protocol_messages_sent: u64,
}

#[derive(Debug, Default)]
struct StatsWindow {
    stats: TransportStats,
    destinations: BTreeSet<usize>,
}

#[derive(Debug, Default)]
struct StatsCell(Mutex<StatsWindow>);

impl StatsCell {
    fn record(&self, src: usize, dst: usize, tag: Tag, bytes: usize) {
        let mut w = self.0.lock().unwrap_or_else(|e| e.into_inner());
        if tag & PROTOCOL_TAG_BIT != 0 {
            w.stats.protocol_messages_sent += 1;
        } else {
            w.stats.messages_sent += 1;
            w.stats.bytes_sent += bytes as u64;
        }
        if dst != src && w.destinations.insert(dst) {
            w.stats.distinct_destinations += 1;
        }
    }

    fn snapshot(&self) -> TransportStats {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).stats
    }

    fn reset(&self) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = StatsWindow::default();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportKind {
    InProc,
    Tcp,
}

impl fmt::Display for TransportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportKind::InProc => "inproc",
            TransportKind::Tcp => "tcp",
        })
    }
}

impl std::str::FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::InProc),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(Error::InvalidArgument(format!(
                "unknown transport {other:?}"
            ))),
        }
    }
}

/// How to build a rank group.
#[derive(Debug, Clone)]
pub struct TransportConfig {
    pub kind: TransportKind,
    /// Interface the TCP listeners bind to.
    pub host: IpAddr,
    /// Rank `r` listens on `port_base + r`; `None` picks ephemeral ports
    /// (only possible when the whole group lives in one process).
    pub port_base: Option<u16>,
    pub connect_timeout: Duration,
}

impl TransportConfig {
    pub fn inproc() -> Self {
        TransportConfig {
            kind: TransportKind::InProc,
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port_base: None,
            connect_timeout: Duration::from_secs(20),
        }
    }

    pub fn tcp() -> Self {
        TransportConfig {
            kind: TransportKind::Tcp,
            ..Self::inproc()
        }
    }

    pub fn of_kind(kind: TransportKind) -> Self {
        TransportConfig {
            kind,
            ..Self::inproc()
        }
    }

    pub fn with_port_base(mut self, port_base: u16) -> Self {
        self.port_base = Some(port_base);
        self
    }
}

/// Completion handle of an acknowledged send.
#[derive(Debug, Clone)]
pub struct SendHandle {
    state: Arc<SendState>,
}

impl SendHandle {
    /// True once the destination has consumed the envelope with a receive.
    pub fn is_complete(&self) -> bool {
        self.state.is_complete()
    }
}

enum Link {
    InProc(Arc<[Arc<Mailbox>]>),
    Tcp(TcpLinks),
}

/// One rank's attachment to a group.
///
/// An endpoint is driven by a single worker at a time; it is `Send + Sync`
/// so communicators derived from it can share it.
pub struct Endpoint {
    rank: usize,
    size: usize,
    mailbox: Arc<Mailbox>,
    link: Link,
    stats: Arc<StatsCell>,
    /// Lowest context id not yet used by a communicator on this rank.
    pub(crate) next_context: AtomicU32,
}

impl fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Endpoint")
            .field("rank", &self.rank)
            .field("size", &self.size)
            .field(
                "kind",
                &match self.link {
                    Link::InProc(_) => TransportKind::InProc,
                    Link::Tcp(_) => TransportKind::Tcp,
                },
            )
            .finish()
    }
}

impl Endpoint {
    fn new(rank: usize, size: usize, mailbox: Arc<Mailbox>, link: Link) -> Self {
        Endpoint {
            rank,
            size,
            mailbox,
            link,
            stats: Arc::default(),
            next_context: AtomicU32::new(crate::communicator::FIRST_FREE_CONTEXT),
        }
    }

    /// Joins a TCP group from this process: binds `addrs[rank]`, dials every
    /// other address and waits until all peers have dialed back.
    pub fn connect_tcp(rank: usize, addrs: &[SocketAddr], timeout: Duration) -> Result<Self> {
        if addrs.is_empty() {
            return Err(Error::EmptyGroup);
        }
        check_rank(rank, addrs.len())?;
        let listener = TcpListener::bind(addrs[rank])
            .map_err(|e| Error::io(format!("bind {}", addrs[rank]), e))?;
        Self::establish_tcp(rank, listener, addrs, timeout)
    }

    fn establish_tcp(
        rank: usize,
        listener: TcpListener,
        addrs: &[SocketAddr],
        timeout: Duration,
    ) -> Result<Self> {
        let mailbox = Mailbox::new(rank, addrs.len());
        let links = TcpLinks::establish(rank, listener, addrs, &mailbox, timeout)?;
        Ok(Endpoint::new(rank, addrs.len(), mailbox, Link::Tcp(links)))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kind(&self) -> TransportKind {
        match self.link {
            Link::InProc(_) => TransportKind::InProc,
            Link::Tcp(_) => TransportKind::Tcp,
        }
    }

    fn deliver(
        &self,
        dst: usize,
        tag: Tag,
        payload: Vec<u8>,
        ack: Option<Arc<SendState>>,
    ) -> Result<()> {
        check_rank(dst, self.size)?;
        self.stats.record(self.rank, dst, tag, payload.len());
        let local = |mailbox: &Mailbox, payload| {
            mailbox.push(Incoming {
                envelope: Envelope {
                    src: self.rank,
                    dst,
                    tag,
                    payload,
                },
                ack: ack.clone().map(Ack::Local),
            })
        };
        match &self.link {
            Link::InProc(mailboxes) => local(&mailboxes[dst], payload),
            Link::Tcp(_) if dst == self.rank => local(&self.mailbox, payload),
            Link::Tcp(links) => links.send(dst, tag, payload, ack)?,
        }
        Ok(())
    }

    /// Buffered send: returns once the payload is owned by the transport.
    pub fn send(&self, dst: usize, tag: Tag, payload: Vec<u8>) -> Result<()> {
        self.deliver(dst, tag, payload, None)
    }

    /// Acknowledged send. The handle completes after the destination has
    /// dequeued the envelope through a matching receive.
    pub fn ssend_async(&self, dst: usize, tag: Tag, payload: Vec<u8>) -> Result<SendHandle> {
        let state = SendState::new(&self.mailbox);
        self.deliver(dst, tag, payload, Some(Arc::clone(&state)))?;
        Ok(SendHandle { state })
    }

    /// Metadata of the first pending envelope accepted by the filter,
    /// without consuming it.
    pub fn probe(&self, src: Option<usize>, tag: Option<Tag>) -> Option<ProbeInfo> {
        self.probe_filtered(src, tag.into())
    }

    pub fn probe_filtered(&self, src: Option<usize>, tag: TagFilter) -> Option<ProbeInfo> {
        self.mailbox.probe(src, tag)
    }

    fn accept(&self, incoming: Incoming) -> Result<Envelope> {
        match incoming.ack {
            Some(Ack::Local(state)) => state.complete(),
            Some(Ack::Remote(seq)) => {
                if let Link::Tcp(links) = &self.link {
                    links.send_ack(incoming.envelope.src, seq)?;
                }
            }
            None => {}
        }
        Ok(incoming.envelope)
    }

    fn disconnected(&self, peer: Option<usize>) -> Error {
        match peer {
            Some(peer) => Error::PeerDisconnected {
                rank: self.rank,
                peer,
            },
            None => Error::GroupShutDown { rank: self.rank },
        }
    }

    /// Blocking receive of the first envelope accepted by the filter.
    pub fn recv(&self, src: Option<usize>, tag: Option<Tag>) -> Result<Envelope> {
        self.recv_filtered(src, tag.into())
    }

    pub fn recv_filtered(&self, src: Option<usize>, tag: TagFilter) -> Result<Envelope> {
        if let Some(s) = src {
            check_rank(s, self.size)?;
        }
        match self.mailbox.take_blocking(src, tag) {
            Wait::Ready(incoming) => self.accept(incoming),
            Wait::Disconnected(peer) => Err(self.disconnected(peer)),
        }
    }

    /// Non-blocking receive.
    pub fn try_recv(&self, src: Option<usize>, tag: Option<Tag>) -> Result<Option<Envelope>> {
        self.try_recv_filtered(src, tag.into())
    }

    pub fn try_recv_filtered(
        &self,
        src: Option<usize>,
        tag: TagFilter,
    ) -> Result<Option<Envelope>> {
        match self.mailbox.try_take(src, tag) {
            None => Ok(None),
            Some(Wait::Ready(incoming)) => self.accept(incoming).map(Some),
            Some(Wait::Disconnected(peer)) => Err(self.disconnected(peer)),
        }
    }

    /// Monotone counter bumped by every arrival and acknowledgement.
    pub fn activity(&self) -> u64 {
        self.mailbox.activity()
    }

    /// Sleeps until [`Self::activity`] moves past `since` or `timeout` elapses.
    pub fn wait_activity(&self, since: u64, timeout: Duration) {
        self.mailbox.wait_activity(since, timeout)
    }

    pub fn stats(&self) -> TransportStats {
        self.stats.snapshot()
    }

    pub fn reset_stats(&self) {
        self.stats.reset()
    }

    /// Cuts this rank off from its peers, so that anyone blocked on it
    /// observes a disconnection instead of waiting forever.
    pub fn abort(&self) {
        match &self.link {
            Link::InProc(mailboxes) => {
                for (r, mailbox) in mailboxes.iter().enumerate() {
                    if r != self.rank {
                        mailbox.mark_disconnected(self.rank);
                    }
                }
            }
            Link::Tcp(links) => links.shutdown(),
        }
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.abort();
    }
}

pub(crate) fn check_rank(rank: usize, size: usize) -> Result<()> {
    if rank < size {
        Ok(())
    } else {
        Err(Error::InvalidRank { rank, size })
    }
}

/// A rank group living in this process: one endpoint per rank.
#[derive(Debug)]
pub struct RankGroup {
    kind: TransportKind,
    endpoints: Vec<Arc<Endpoint>>,
}

/// Builds a group of `p` connected endpoints.
pub fn spawn_group(p: usize, config: &TransportConfig) -> Result<RankGroup> {
    if p == 0 {
        return Err(Error::EmptyGroup);
    }
    let endpoints = match config.kind {
        TransportKind::InProc => {
            let mailboxes: Arc<[Arc<Mailbox>]> = (0..p).map(|r| Mailbox::new(r, p)).collect();
            (0..p)
                .map(|r| {
                    Endpoint::new(
                        r,
                        p,
                        Arc::clone(&mailboxes[r]),
                        Link::InProc(Arc::clone(&mailboxes)),
                    )
                })
                .collect()
        }
        TransportKind::Tcp => spawn_tcp(p, config)?,
    };
    Ok(RankGroup {
        kind: config.kind,
        endpoints: endpoints.into_iter().map(Arc::new).collect(),
    })
}

fn spawn_tcp(p: usize, config: &TransportConfig) -> Result<Vec<Endpoint>> {
    let mut listeners = Vec::with_capacity(p);
    let mut addrs = Vec::with_capacity(p);
    for r in 0..p {
        let port = match config.port_base {
            Some(base) => base.checked_add(r as u16).ok_or_else(|| {
                Error::InvalidArgument(format!("port range {base}+{p} exceeds 65535"))
            })?,
            None => 0,
        };
        let addr = SocketAddr::new(config.host, port);
        let listener = TcpListener::bind(addr).map_err(|e| Error::io(format!("bind {addr}"), e))?;
        addrs.push(
            listener
                .local_addr()
                .map_err(|e| Error::io("local_addr", e))?,
        );
        listeners.push(listener);
    }
    let addrs = &addrs;
    std::thread::scope(|s| {
        let handles: Vec<_> = listeners
            .into_iter()
            .enumerate()
            .map(|(r, l)| {
                s.spawn(move || Endpoint::establish_tcp(r, l, addrs, config.connect_timeout))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tcp setup thread panicked"))
            .collect()
    })
}

impl RankGroup {
    pub fn size(&self) -> usize {
        self.endpoints.len()
    }

    pub fn kind(&self) -> TransportKind {
        self.kind
    }

    pub fn endpoints(&self) -> &[Arc<Endpoint>] {
        &self.endpoints
    }

    pub fn endpoint(&self, rank: usize) -> &Arc<Endpoint> {
        &self.endpoints[rank]
    }

    /// Consistent per-rank snapshot of the current measurement window.
    pub fn stats(&self) -> Vec<TransportStats> {
        self.endpoints.iter().map(|e| e.stats()).collect()
    }

    pub fn reset_stats(&self) {
        for e in &self.endpoints {
            e.reset_stats();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn both_kinds() -> [TransportConfig; 2] {
        [TransportConfig::inproc(), TransportConfig::tcp()]
    }

    #[test]
    fn empty_group_is_rejected() {
        assert!(matches!(
            spawn_group(0, &TransportConfig::inproc()),
            Err(Error::EmptyGroup)
        ));
    }

    #[test]
    fn single_rank_group() {
        let g = spawn_group(1, &TransportConfig::inproc()).unwrap();
        assert_eq!(g.size(), 1);
        assert_eq!(g.endpoint(0).rank(), 0);
    }

    #[test]
    fn ranks_are_dense() {
        for cfg in both_kinds() {
            let g = spawn_group(4, &cfg).unwrap();
            let ranks: Vec<_> = g.endpoints().iter().map(|e| e.rank()).collect();
            assert_eq!(ranks, vec![0, 1, 2, 3]);
            assert!(g.endpoints().iter().all(|e| e.size() == 4));
        }
    }

    #[test]
    fn send_recv_and_self_delivery() {
        for cfg in both_kinds() {
            let g = spawn_group(2, &cfg).unwrap();
            g.endpoint(0).send(1, 7, b"abc".to_vec()).unwrap();
            let env = g.endpoint(1).recv(None, None).unwrap();
            assert_eq!((env.src, env.dst, env.tag), (0, 1, 7));
            assert_eq!(env.payload, b"abc");

            g.endpoint(0).send(0, 1, b"me".to_vec()).unwrap();
            assert_eq!(g.endpoint(0).recv(Some(0), Some(1)).unwrap().payload, b"me");
        }
    }

    #[test]
    fn fifo_per_channel() {
        for cfg in both_kinds() {
            let g = spawn_group(2, &cfg).unwrap();
            g.endpoint(0).send(1, 3, b"a".to_vec()).unwrap();
            g.endpoint(0).send(1, 3, b"b".to_vec()).unwrap();
            assert_eq!(g.endpoint(1).recv(Some(0), Some(3)).unwrap().payload, b"a");
            assert_eq!(g.endpoint(1).recv(Some(0), Some(3)).unwrap().payload, b"b");
        }
    }

    #[test]
    fn tag_matching_skips_other_tags() {
        for cfg in both_kinds() {
            let g = spawn_group(2, &cfg).unwrap();
            g.endpoint(0).send(1, 1, b"first".to_vec()).unwrap();
            g.endpoint(0).send(1, 2, b"second".to_vec()).unwrap();
            assert_eq!(
                g.endpoint(1).recv(None, Some(2)).unwrap().payload,
                b"second"
            );
            assert_eq!(g.endpoint(1).recv(None, Some(1)).unwrap().payload, b"first");
        }
    }

    #[test]
    fn probe_reports_without_consuming() {
        let g = spawn_group(3, &TransportConfig::inproc()).unwrap();
        let ep = g.endpoint(0);
        assert_eq!(ep.probe(None, None), None);
        g.endpoint(2).send(0, 5, vec![0; 10]).unwrap();
        assert_eq!(
            ep.probe(None, None),
            Some(ProbeInfo {
                src: 2,
                tag: 5,
                len: 10
            })
        );
        assert_eq!(ep.probe(Some(1), None), None);
        assert_eq!(ep.probe(None, None).map(|p| p.len), Some(10));
        assert_eq!(ep.recv(Some(2), Some(5)).unwrap().payload.len(), 10);
        assert_eq!(ep.probe(None, None), None);
    }

    #[test]
    fn recv_posted_before_send() {
        for cfg in both_kinds() {
            let g = spawn_group(2, &cfg).unwrap();
            let (a, b) = (Arc::clone(g.endpoint(0)), Arc::clone(g.endpoint(1)));
            let t = thread::spawn(move || b.recv(Some(0), None).unwrap().payload);
            thread::sleep(Duration::from_millis(20));
            a.send(1, 0, b"late".to_vec()).unwrap();
            assert_eq!(t.join().unwrap(), b"late");
        }
    }

    #[test]
    fn ssend_completes_only_after_receive() {
        for cfg in both_kinds() {
            let g = spawn_group(2, &cfg).unwrap();
            let h = g.endpoint(0).ssend_async(1, 4, b"x".to_vec()).unwrap();
            thread::sleep(Duration::from_millis(20));
            assert!(!h.is_complete());
            g.endpoint(1).recv(Some(0), Some(4)).unwrap();
            let deadline = std::time::Instant::now() + Duration::from_secs(5);
            while !h.is_complete() {
                assert!(std::time::Instant::now() < deadline, "ack never arrived");
                thread::sleep(Duration::from_millis(1));
            }
        }
    }

    #[test]
    fn masked_filter_matches_tag_class() {
        let f = TagFilter::masked(0x0003_0000, 0xffff_0000);
        assert!(f.accepts(0x0003_0001));
        assert!(!f.accepts(0x0004_0001));
        assert!(!f.accepts(0x8003_0001));
        assert!(TagFilter::ANY.accepts(123));
        assert_eq!(TagFilter::from(Some(9)), TagFilter::exact(9));
    }

    #[test]
    fn invalid_destination() {
        let g = spawn_group(2, &TransportConfig::inproc()).unwrap();
        assert!(matches!(
            g.endpoint(0).send(2, 0, vec![]),
            Err(Error::InvalidRank { rank: 2, size: 2 })
        ));
    }

    #[test]
    fn stats_window() {
        let g = spawn_group(3, &TransportConfig::inproc()).unwrap();
        g.endpoint(0).send(1, 0, vec![1, 2, 3]).unwrap();
        g.endpoint(0).send(1, 0, vec![4]).unwrap();
        g.endpoint(0).send(0, 0, vec![5]).unwrap();
        g.endpoint(0).send(2, PROTOCOL_TAG_BIT, vec![]).unwrap();
        let s = g.stats()[0];
        assert_eq!(s.messages_sent, 3);
        assert_eq!(s.bytes_sent, 5);
        assert_eq!(s.protocol_messages_sent, 1);
        assert_eq!(s.distinct_destinations, 2);
        g.reset_stats();
        assert!(g.stats().iter().all(|s| *s == TransportStats::default()));
    }

    #[test]
    fn dropped_peer_unblocks_receiver() {
        let g = spawn_group(2, &TransportConfig::inproc()).unwrap();
        let ep = Arc::clone(g.endpoint(0));
        let t = thread::spawn(move || ep.recv(Some(1), None));
        thread::sleep(Duration::from_millis(20));
        g.endpoint(1).abort();
        assert!(matches!(
            t.join().unwrap(),
            Err(Error::PeerDisconnected { rank: 0, peer: 1 })
        ));
    }

    #[test]
    fn tcp_peer_shutdown_unblocks_receiver() {
        let g = spawn_group(2, &TransportConfig::tcp()).unwrap();
        let ep = Arc::clone(g.endpoint(0));
        let t = thread::spawn(move || ep.recv(None, None));
        thread::sleep(Duration::from_millis(20));
        g.endpoint(1).abort();
        assert!(t.join().unwrap().is_err());
    }
}
