//! Per-rank incoming queue with (source, tag) matching.
//!
//! Envelopes are kept in arrival order; a receive takes the first envelope
//! accepted by its filter, so each (source, tag) channel is consumed FIFO.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::time::Duration;

use super::{Envelope, ProbeInfo, TagFilter};

/// Completion state of an acknowledged send.
#[derive(Debug)]
pub(crate) struct SendState {
    done: AtomicBool,
    sender: Weak<Mailbox>,
}

impl SendState {
    pub(crate) fn new(sender: &Arc<Mailbox>) -> Arc<Self> {
        Arc::new(SendState {
            done: AtomicBool::new(false),
            sender: Arc::downgrade(sender),
        })
    }

    pub(crate) fn complete(&self) {
        self.done.store(true, Ordering::Release);
        if let Some(mailbox) = self.sender.upgrade() {
            mailbox.bump();
        }
    }

    pub(crate) fn is_complete(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }
}

/// How the receiver acknowledges consumption of an envelope.
#[derive(Debug)]
pub(crate) enum Ack {
    /// Sender lives in this process: flip its flag directly.
    Local(Arc<SendState>),
    /// Sender is behind a socket: answer with an ACK frame carrying `seq`.
    Remote(u32),
}

#[derive(Debug)]
pub(crate) struct Incoming {
    pub(crate) envelope: Envelope,
    pub(crate) ack: Option<Ack>,
}

#[derive(Debug)]
struct Inbox {
    queue: VecDeque<Incoming>,
    disconnected: Vec<bool>,
    activity: u64,
}

#[derive(Debug)]
pub(crate) struct Mailbox {
    owner: usize,
    inbox: Mutex<Inbox>,
    cv: Condvar,
}

pub(crate) enum Wait {
    Ready(Incoming),
    Disconnected(Option<usize>),
}

fn accepts(env: &Envelope, src: Option<usize>, tag: TagFilter) -> bool {
    src.is_none_or(|s| s == env.src) && tag.accepts(env.tag)
}

impl Mailbox {
    pub(crate) fn new(owner: usize, size: usize) -> Arc<Self> {
        Arc::new(Mailbox {
            owner,
            inbox: Mutex::new(Inbox {
                queue: VecDeque::new(),
                disconnected: vec![false; size],
                activity: 0,
            }),
            cv: Condvar::new(),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inbox> {
        // A panicking rank never leaves the queue half-updated.
        self.inbox.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn push(&self, incoming: Incoming) {
        let mut inbox = self.lock();
        inbox.queue.push_back(incoming);
        inbox.activity += 1;
        drop(inbox);
        self.cv.notify_all();
    }

    pub(crate) fn bump(&self) {
        self.lock().activity += 1;
        self.cv.notify_all();
    }

    pub(crate) fn mark_disconnected(&self, peer: usize) {
        let mut inbox = self.lock();
        if let Some(flag) = inbox.disconnected.get_mut(peer) {
            *flag = true;
        }
        inbox.activity += 1;
        drop(inbox);
        self.cv.notify_all();
    }

    pub(crate) fn probe(&self, src: Option<usize>, tag: TagFilter) -> Option<ProbeInfo> {
        let inbox = self.lock();
        inbox
            .queue
            .iter()
            .find(|i| accepts(&i.envelope, src, tag))
            .map(|i| ProbeInfo {
                src: i.envelope.src,
                tag: i.envelope.tag,
                len: i.envelope.payload.len(),
            })
    }

    fn take(inbox: &mut Inbox, src: Option<usize>, tag: TagFilter) -> Option<Incoming> {
        let pos = inbox
            .queue
            .iter()
            .position(|i| accepts(&i.envelope, src, tag))?;
        inbox.queue.remove(pos)
    }

    /// Disconnection is only reported when nothing that could still match
    /// can arrive: the named source is gone, or every peer is gone.
    fn dead_filter(&self, inbox: &Inbox, src: Option<usize>) -> Option<Option<usize>> {
        match src {
            Some(s) if s != self.owner && inbox.disconnected[s] => Some(Some(s)),
            Some(_) => None,
            None => {
                let others = inbox.disconnected.len().saturating_sub(1);
                let dead = inbox
                    .disconnected
                    .iter()
                    .enumerate()
                    .filter(|&(r, &d)| r != self.owner && d)
                    .count();
                (others > 0 && dead == others).then_some(None)
            }
        }
    }

    pub(crate) fn try_take(&self, src: Option<usize>, tag: TagFilter) -> Option<Wait> {
        let mut inbox = self.lock();
        if let Some(found) = Self::take(&mut inbox, src, tag) {
            return Some(Wait::Ready(found));
        }
        self.dead_filter(&inbox, src).map(Wait::Disconnected)
    }

    pub(crate) fn take_blocking(&self, src: Option<usize>, tag: TagFilter) -> Wait {
        let mut inbox = self.lock();
        loop {
            if let Some(found) = Self::take(&mut inbox, src, tag) {
                return Wait::Ready(found);
            }
            if let Some(peer) = self.dead_filter(&inbox, src) {
                return Wait::Disconnected(peer);
            }
            inbox = self.cv.wait(inbox).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub(crate) fn activity(&self) -> u64 {
        self.lock().activity
    }

    pub(crate) fn wait_activity(&self, since: u64, timeout: Duration) {
        let inbox = self.lock();
        if inbox.activity != since {
            return;
        }
        let _ = self
            .cv
            .wait_timeout_while(inbox, timeout, |i| i.activity == since)
            .unwrap_or_else(|e| e.into_inner());
    }
}
