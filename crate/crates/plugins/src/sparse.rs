use commkit::{Codec, Communicator, Result};

use crate::tags;

/// Delivers each `(destination, payload)` pair to its destination without
/// any rank knowing in advance what it will receive.
///
/// Every payload travels as one acknowledged message, acknowledged when the
/// destination consumes it. A rank joins a non-blocking barrier once all of
/// its own messages are acknowledged; the exchange ends when the barrier
/// completes, at which point nothing can still be in flight. Apart from the barrier's protocol envelopes, a rank
/// sends exactly one envelope per pair.
///
/// Returns `(source, payload)` pairs sorted by source. Messages from one
/// source keep their send order. Duplicate destinations are delivered as
/// distinct messages, and self-sends are allowed.
///
/// Collective over `comm`. A destination out of range is reported before
/// anything is sent.
///
/// ```
/// use commkit::{run_world, TransportConfig};
/// use commkit_plugins::sparse_alltoall;
///
/// let out = run_world(3, &TransportConfig::inproc(), |comm| {
///     let next = (comm.rank() + 1) % comm.size();
///     sparse_alltoall(&comm, vec![(next, vec![comm.rank() as u8])]).unwrap()
/// })
/// .unwrap();
/// assert_eq!(out[0], vec![(2, vec![2u8])]);
/// ```
pub fn sparse_alltoall<C: Codec>(
    comm: &Communicator,
    sends: impl IntoIterator<Item = (usize, C)>,
) -> Result<Vec<(usize, C)>> {
    let sends: Vec<(usize, C)> = sends.into_iter().collect();
    for &(dst, _) in &sends {
        comm.check_rank(dst)?;
    }
    let tag = tags::NBX[(comm.next_call_index() % 2) as usize];

    let mut handles = Vec::with_capacity(sends.len());
    for (dst, payload) in &sends {
        handles.push(comm.internal_ssend(*dst, tag, payload.encode_payload()?)?);
    }

    let mut received = Vec::new();
    let mut barrier = None;
    loop {
        let mark = comm.endpoint().activity();
        while let Some((src, bytes)) = comm.internal_try_recv(None, tag)? {
            received.push((src, C::decode_payload(&bytes)?));
        }
        match barrier.as_mut() {
            None => {
                if handles.iter().all(|h| h.is_complete()) {
                    barrier = Some(comm.ibarrier()?);
                    continue;
                }
            }
            Some(b) => {
                if b.test()?.is_some() {
                    break;
                }
            }
        }
        comm.idle_since(mark);
    }
    received.sort_by_key(|&(src, _)| src);
    Ok(received)
}
