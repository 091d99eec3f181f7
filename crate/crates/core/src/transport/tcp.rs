//! Socket links between ranks.
//!
//! Each ordered pair of distinct ranks gets its own connection: rank `i`
//! dials rank `j` and only ever writes on that stream. A reader thread per
//! accepted connection decodes frames into the local mailbox and resolves
//! acknowledgements for sends this rank issued.

use std::collections::HashMap;
use std::io::BufReader;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use super::mailbox::{Ack, Incoming, Mailbox, SendState};
use super::wire::{self, Frame, FLAG_REQUIRES_ACK};
use super::{Envelope, Tag};
use crate::error::{Error, Result};

type PendingAcks = Arc<Mutex<HashMap<(usize, u32), Arc<SendState>>>>;

struct Outgoing {
    stream: TcpStream,
    next_seq: u32,
}

pub(crate) struct TcpLinks {
    rank: usize,
    outgoing: Vec<Option<Mutex<Outgoing>>>,
    incoming: Vec<TcpStream>,
    pending: PendingAcks,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl TcpLinks {
    pub(crate) fn establish(
        rank: usize,
        listener: TcpListener,
        addrs: &[SocketAddr],
        mailbox: &Arc<Mailbox>,
        timeout: Duration,
    ) -> Result<Self> {
        let size = addrs.len();
        let deadline = Instant::now() + timeout;
        let pending: PendingAcks = Arc::default();

        let acceptor = {
            let mailbox = Arc::clone(mailbox);
            let pending = Arc::clone(&pending);
            thread::Builder::new()
                .name(format!("accept-{rank}"))
                .spawn(move || accept_all(rank, size, listener, mailbox, pending, deadline))
                .map_err(|e| Error::io("spawn acceptor", e))?
        };

        let mut outgoing = Vec::with_capacity(size);
        for (peer, addr) in addrs.iter().enumerate() {
            if peer == rank {
                outgoing.push(None);
                continue;
            }
            let mut stream = connect_with_retry(*addr, deadline)?;
            stream
                .set_nodelay(true)
                .map_err(|e| Error::io("set_nodelay", e))?;
            wire::write_handshake(&mut stream, rank as u32)
                .map_err(|e| Error::io(format!("handshake with rank {peer}"), e))?;
            outgoing.push(Some(Mutex::new(Outgoing {
                stream,
                next_seq: 0,
            })));
        }

        let incoming = acceptor
            .join()
            .map_err(|_| Error::Frame("acceptor thread panicked".into()))??;
        Ok(TcpLinks {
            rank,
            outgoing,
            incoming,
            pending,
        })
    }

    pub(crate) fn send(
        &self,
        dst: usize,
        tag: Tag,
        payload: Vec<u8>,
        ack: Option<Arc<SendState>>,
    ) -> Result<()> {
        let link = self.outgoing[dst]
            .as_ref()
            .expect("self-sends never reach the socket layer");
        let mut out = lock(link);
        let mut flags = 0;
        if let Some(state) = ack {
            let seq = out.next_seq;
            out.next_seq = out.next_seq.wrapping_add(1);
            lock(&self.pending).insert((dst, seq), state);
            flags = FLAG_REQUIRES_ACK;
        }
        let frame = Frame {
            src: self.rank as u32,
            dst: dst as u32,
            tag,
            flags,
            payload,
        };
        wire::write_frame(&mut out.stream, &frame)
            .map_err(|e| Error::io(format!("send to rank {dst}"), e))
    }

    pub(crate) fn send_ack(&self, to: usize, seq: u32) -> Result<()> {
        let link = self.outgoing[to]
            .as_ref()
            .expect("self-sends are acknowledged locally");
        let mut out = lock(link);
        wire::write_frame(
            &mut out.stream,
            &Frame::ack(self.rank as u32, to as u32, seq),
        )
        .map_err(|e| Error::io(format!("ack to rank {to}"), e))
    }

    pub(crate) fn shutdown(&self) {
        for link in self.outgoing.iter().flatten() {
            let _ = lock(link).stream.shutdown(Shutdown::Both);
        }
        for stream in &self.incoming {
            let _ = stream.shutdown(Shutdown::Both);
        }
    }
}

fn connect_with_retry(addr: SocketAddr, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => {
                return Err(Error::io(format!("connect to {addr}"), e))
            }
            Err(_) => thread::sleep(Duration::from_millis(20)),
        }
    }
}

fn accept_all(
    rank: usize,
    size: usize,
    listener: TcpListener,
    mailbox: Arc<Mailbox>,
    pending: PendingAcks,
    deadline: Instant,
) -> Result<Vec<TcpStream>> {
    listener
        .set_nonblocking(true)
        .map_err(|e| Error::io("listener nonblocking", e))?;
    let mut seen = vec![false; size];
    let mut streams = Vec::with_capacity(size.saturating_sub(1));
    while streams.len() + 1 < size {
        let mut stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::io(format!("rank {rank} waiting for peers"), e));
                }
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(Error::io("accept", e)),
        };
        stream
            .set_nonblocking(false)
            .and_then(|_| stream.set_nodelay(true))
            .map_err(|e| Error::io("configure accepted stream", e))?;
        let src =
            wire::read_handshake(&mut stream).map_err(|e| Error::io("read handshake", e))? as usize;
        if src >= size || src == rank || seen[src] {
            return Err(Error::Frame(format!(
                "unexpected handshake from rank {src} at rank {rank}"
            )));
        }
        seen[src] = true;
        let reader = stream
            .try_clone()
            .map_err(|e| Error::io("clone stream", e))?;
        let mailbox = Arc::clone(&mailbox);
        let pending = Arc::clone(&pending);
        thread::Builder::new()
            .name(format!("read-{src}-{rank}"))
            .spawn(move || read_loop(rank, src, reader, mailbox, pending))
            .map_err(|e| Error::io("spawn reader", e))?;
        streams.push(stream);
    }
    Ok(streams)
}

fn read_loop(
    rank: usize,
    src: usize,
    stream: TcpStream,
    mailbox: Arc<Mailbox>,
    pending: PendingAcks,
) {
    let mut reader = BufReader::new(stream);
    let mut seq: u32 = 0;
    while let Ok(Some(frame)) = wire::read_frame(&mut reader) {
        if frame.src as usize != src || frame.dst as usize != rank {
            break;
        }
        if frame.is_ack() {
            if let Some(state) = lock(&pending).remove(&(src, frame.tag)) {
                state.complete();
            }
            continue;
        }
        let ack = frame.requires_ack().then(|| {
            let s = seq;
            seq = seq.wrapping_add(1);
            Ack::Remote(s)
        });
        mailbox.push(Incoming {
            envelope: Envelope {
                src,
                dst: rank,
                tag: frame.tag,
                payload: frame.payload,
            },
            ack,
        });
    }
    mailbox.mark_disconnected(src);
}
