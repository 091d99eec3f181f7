use crate::communicator::Communicator;
use crate::datatype::Plain;
use crate::error::{Error, Result};
use crate::params::ResultBundle;

/// A contiguous send buffer with per-destination counts, ready for an
/// all-to-all exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flattened<T> {
    pub send_buf: Vec<T>,
    pub send_counts: Vec<i32>,
}

impl<T: Plain> Flattened<T> {
    /// Exchanges the buffer with [`Communicator::alltoallv`], returning the
    /// received elements and per-source counts.
    pub fn alltoallv(&self, comm: &Communicator) -> Result<ResultBundle<T>> {
        comm.alltoallv()
            .send_buf(&self.send_buf)
            .send_counts(&self.send_counts)
            .recv_counts_out()
            .call()
    }
}

/// Flattens destination-message pairs into one buffer ordered by ascending
/// destination, plus the element count for every rank of a group of `size`.
///
/// Messages for the same destination are concatenated in iteration order.
///
/// ```
/// use commkit::collectives::with_flattened;
///
/// let f = with_flattened([(2, vec!['x']), (0, vec!['y', 'z'])].map(|(d, v)| {
///     (d, v.into_iter().map(|c| c as u32).collect::<Vec<_>>())
/// }), 3).unwrap();
/// assert_eq!(f.send_buf, vec!['y' as u32, 'z' as u32, 'x' as u32]);
/// assert_eq!(f.send_counts, vec![2, 0, 1]);
/// ```
pub fn with_flattened<T, I, M>(messages: I, size: usize) -> Result<Flattened<T>>
where
    T: Plain,
    I: IntoIterator<Item = (usize, M)>,
    M: AsRef<[T]>,
{
    let mut buckets: Vec<Vec<T>> = vec![Vec::new(); size];
    for (dst, msg) in messages {
        buckets
            .get_mut(dst)
            .ok_or(Error::InvalidRank { rank: dst, size })?
            .extend_from_slice(msg.as_ref());
    }
    let send_counts = buckets
        .iter()
        .map(|b| {
            i32::try_from(b.len()).map_err(|_| Error::DisplacementOverflow {
                param: "send_counts",
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Flattened {
        send_buf: buckets.concat(),
        send_counts,
    })
}
