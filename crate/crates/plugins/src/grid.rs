use std::ops::Range;

use commkit::datatype::{self, Plain};
use commkit::params::{check_counts, exclusive_prefix_sum};
use commkit::{CodecError, Communicator, Error, OutKind, Result, ResultBundle};

use crate::tags;

/// A virtual grid of `rows × columns` over ranks `0..size`, filled row by
/// row. `columns = ceil(sqrt(size))` and `rows = ceil(size / columns)`; all
/// rows but the last are complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridTopology {
    size: usize,
    columns: usize,
    rows: usize,
}

/// The grid for `comm`'s group. Purely local.
pub fn build_grid(comm: &Communicator) -> GridTopology {
    GridTopology::new(comm.size())
}

impl GridTopology {
    /// # Panics
    /// If `size` is zero.
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "a grid needs at least one rank");
        let mut columns = 1;
        while columns * columns < size {
            columns += 1;
        }
        GridTopology {
            size,
            columns,
            rows: size.div_ceil(columns),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `(row, column)` of `rank`.
    pub fn position(&self, rank: usize) -> (usize, usize) {
        (rank / self.columns, rank % self.columns)
    }

    pub fn rank_at(&self, row: usize, col: usize) -> Option<usize> {
        let rank = row * self.columns + col;
        (col < self.columns && rank < self.size).then_some(rank)
    }

    pub fn row_width(&self, row: usize) -> usize {
        self.row_members(row).len()
    }

    pub fn row_members(&self, row: usize) -> Range<usize> {
        let start = (row * self.columns).min(self.size);
        start..((row + 1) * self.columns).min(self.size)
    }

    pub fn column_members(&self, col: usize) -> Vec<usize> {
        (0..self.rows)
            .filter_map(|row| self.rank_at(row, col))
            .collect()
    }

    /// The rank that forwards messages from `s` to `d`: the one at
    /// `(row(s), col(d))`, or at `(row(s) - 1, col(d))` when that position
    /// lies beyond the end of a partial last row.
    pub fn intermediate_of(&self, s: usize, d: usize) -> usize {
        let (row, _) = self.position(s);
        let (_, col) = self.position(d);
        self.rank_at(row, col)
            .or_else(|| self.rank_at(row - 1, col))
            .expect("rows above the last are complete")
    }

    /// Ranks in the row above that `rank` reaches through fallback routing;
    /// empty unless `rank` sits in a partial last row.
    fn fallback_targets(&self, rank: usize) -> Vec<usize> {
        let (row, _) = self.position(rank);
        let width = self.row_width(row);
        if row == 0 || width == self.columns {
            return Vec::new();
        }
        (width..self.columns)
            .map(|col| self.rank_at(row - 1, col).expect("complete row"))
            .collect()
    }

    /// Last-row ranks that route through `rank` as a fallback intermediate.
    fn fallback_sources(&self, rank: usize) -> Range<usize> {
        let (row, col) = self.position(rank);
        let last = self.rows - 1;
        if row + 1 == last && col >= self.row_width(last) {
            self.row_members(last)
        } else {
            0..0
        }
    }

    /// Upper bound on the distinct other ranks one rank contacts during
    /// [`grid_alltoallv`].
    pub fn max_destinations(&self) -> usize {
        (self.columns - 1) + (self.rows - 1) + 2
    }
}

struct Envelope {
    final_dst: usize,
    origin: usize,
    payload: Vec<u8>,
}

fn encode_bundle(envelopes: &[Envelope]) -> Vec<u8> {
    let len = 4 + envelopes
        .iter()
        .map(|e| 12 + e.payload.len())
        .sum::<usize>();
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&(envelopes.len() as u32).to_le_bytes());
    for e in envelopes {
        out.extend_from_slice(&(e.final_dst as u32).to_le_bytes());
        out.extend_from_slice(&(e.origin as u32).to_le_bytes());
        out.extend_from_slice(&(e.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.payload);
    }
    out
}

fn decode_bundle(bytes: &[u8], into: &mut Vec<Envelope>) -> Result<()> {
    fn malformed(what: &str) -> Error {
        Error::Codec(CodecError::Malformed(format!("grid bundle: {what}")))
    }
    let mut at = 0usize;
    let word = |at: &mut usize| -> Result<u32> {
        let b = bytes
            .get(*at..*at + 4)
            .ok_or_else(|| malformed("truncated header"))?;
        *at += 4;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    };
    let count = word(&mut at)?;
    for _ in 0..count {
        let final_dst = word(&mut at)? as usize;
        let origin = word(&mut at)? as usize;
        let n = word(&mut at)? as usize;
        let payload = bytes
            .get(at..at + n)
            .ok_or_else(|| malformed("truncated payload"))?
            .to_vec();
        at += n;
        into.push(Envelope {
            final_dst,
            origin,
            payload,
        });
    }
    if at != bytes.len() {
        return Err(malformed("trailing bytes"));
    }
    Ok(())
}

/// All-to-all with the contract of
/// [`Communicator::alltoallv`](commkit::Communicator::alltoallv) with packed
/// displacements, routed in two hops over `topo`.
///
/// Hop one sends each segment, wrapped with its final destination and
/// origin, to the intermediate in the sender's row (or the row above, see
/// [`GridTopology::intermediate_of`]). Hop two forwards along the
/// intermediate's column. Each hop sends exactly one bundle, possibly
/// empty, to every peer in the row or column.
///
/// The result holds the received elements in origin-rank order and the
/// per-origin counts as `recv_counts`.
pub fn grid_alltoallv<T: Plain>(
    comm: &Communicator,
    topo: &GridTopology,
    send_buf: &[T],
    send_counts: &[i32],
) -> Result<ResultBundle<T>> {
    let (rank, p) = comm.rank_and_size();
    if topo.size() != p {
        return Err(Error::InvalidArgument(format!(
            "grid of {} ranks used on a group of {p}",
            topo.size()
        )));
    }
    check_counts(send_counts, p, "send_counts")?;
    let displs = exclusive_prefix_sum(send_counts, "send_displs")?;
    let needed = displs[p - 1] as i64 + send_counts[p - 1] as i64;
    if needed > send_buf.len() as i64 {
        return Err(Error::SegmentOutOfRange {
            param: "send_buf",
            index: p - 1,
            displ: displs[p - 1],
            end: needed,
            len: send_buf.len(),
        });
    }

    let (my_row, my_col) = topo.position(rank);
    let mut by_intermediate: Vec<Vec<Envelope>> = (0..p).map(|_| Vec::new()).collect();
    for d in (0..p).filter(|&d| send_counts[d] > 0) {
        let at = displs[d] as usize;
        by_intermediate[topo.intermediate_of(rank, d)].push(Envelope {
            final_dst: d,
            origin: rank,
            payload: datatype::encode(&send_buf[at..at + send_counts[d] as usize]),
        });
    }

    // Hop one: row peers always, fallback intermediates when in a partial
    // last row.
    let row_peers: Vec<usize> = topo.row_members(my_row).filter(|&x| x != rank).collect();
    for &peer in &row_peers {
        comm.internal_send(peer, tags::GRID_ROW, encode_bundle(&by_intermediate[peer]))?;
    }
    for peer in topo.fallback_targets(rank) {
        comm.internal_send(
            peer,
            tags::GRID_FALLBACK,
            encode_bundle(&by_intermediate[peer]),
        )?;
    }
    let mut held = std::mem::take(&mut by_intermediate[rank]);
    for &peer in &row_peers {
        decode_bundle(&comm.internal_recv(peer, tags::GRID_ROW)?, &mut held)?;
    }
    for src in topo.fallback_sources(rank) {
        decode_bundle(&comm.internal_recv(src, tags::GRID_FALLBACK)?, &mut held)?;
    }

    // Hop two: forward along the column.
    let mut by_dst: Vec<Vec<Envelope>> = (0..p).map(|_| Vec::new()).collect();
    for e in held {
        if e.final_dst >= p || topo.position(e.final_dst).1 != my_col {
            return Err(Error::Codec(CodecError::Malformed(format!(
                "grid bundle: envelope for rank {} reached column {my_col}",
                e.final_dst
            ))));
        }
        by_dst[e.final_dst].push(e);
    }
    let column_peers: Vec<usize> = topo
        .column_members(my_col)
        .into_iter()
        .filter(|&x| x != rank)
        .collect();
    for &peer in &column_peers {
        comm.internal_send(peer, tags::GRID_COLUMN, encode_bundle(&by_dst[peer]))?;
    }
    let mut delivered = std::mem::take(&mut by_dst[rank]);
    for &peer in &column_peers {
        decode_bundle(
            &comm.internal_recv(peer, tags::GRID_COLUMN)?,
            &mut delivered,
        )?;
    }

    delivered.sort_by_key(|e| e.origin);
    let mut recv_counts = vec![0i32; p];
    let mut out = Vec::new();
    for e in delivered {
        if e.origin >= p {
            return Err(Error::Codec(CodecError::Malformed(format!(
                "grid bundle: origin {} out of range",
                e.origin
            ))));
        }
        let values: Vec<T> = datatype::decode(&e.payload)?;
        recv_counts[e.origin] += values.len() as i32;
        out.extend(values);
    }
    Ok(ResultBundle::from_parts(
        out,
        vec![(OutKind::RecvCounts, recv_counts)],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let g = GridTopology::new(4);
        assert_eq!((g.columns(), g.rows(), g.position(3)), (2, 2, (1, 1)));
        let g = GridTopology::new(3);
        assert_eq!((g.columns(), g.rows(), g.row_width(1)), (2, 2, 1));
        let g = GridTopology::new(16);
        assert_eq!((g.columns(), g.rows()), (4, 4));
        assert_eq!(g.row_members(g.position(9).0), 8..12);
        let g = GridTopology::new(1);
        assert_eq!((g.columns(), g.rows(), g.intermediate_of(0, 0)), (1, 1, 0));
    }

    #[test]
    fn every_rank_has_a_unique_position() {
        for p in 1..=40 {
            let g = GridTopology::new(p);
            assert_eq!(g.columns(), (1..).find(|c| c * c >= p).unwrap());
            assert_eq!(g.rows(), p.div_ceil(g.columns()));
            for row in 0..g.rows() - 1 {
                assert_eq!(g.row_width(row), g.columns());
            }
            assert!(g.row_width(g.rows() - 1) >= 1);
            let mut seen = std::collections::HashSet::new();
            for r in 0..p {
                let (row, col) = g.position(r);
                assert_eq!(g.rank_at(row, col), Some(r));
                assert!(seen.insert((row, col)));
            }
        }
    }

    #[test]
    fn routing_examples() {
        let g = GridTopology::new(4);
        assert_eq!(g.intermediate_of(0, 3), 1);
        let g = GridTopology::new(3);
        assert_eq!(g.intermediate_of(2, 1), 1);
        for p in 1..=20 {
            let g = GridTopology::new(p);
            for s in 0..p {
                assert_eq!(g.intermediate_of(s, s), s);
                for d in 0..p {
                    let i = g.intermediate_of(s, d);
                    assert_eq!(g.position(i).1, g.position(d).1);
                    let row_gap = g.position(s).0 - g.position(i).0;
                    assert!(row_gap <= 1);
                    if row_gap == 1 {
                        assert!(g.fallback_targets(s).contains(&i));
                        assert!(g.fallback_sources(i).contains(&s));
                    }
                }
            }
        }
    }

    #[test]
    fn bundles_round_trip() {
        let env = vec![
            Envelope {
                final_dst: 3,
                origin: 1,
                payload: vec![1, 2, 3],
            },
            Envelope {
                final_dst: 0,
                origin: 2,
                payload: vec![],
            },
        ];
        let mut back = Vec::new();
        decode_bundle(&encode_bundle(&env), &mut back).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(
            (back[0].final_dst, back[0].origin, &back[0].payload),
            (3, 1, &vec![1, 2, 3])
        );
        assert!(back[1].payload.is_empty());
        let bytes = encode_bundle(&env);
        assert!(decode_bundle(&bytes[..bytes.len() - 1], &mut Vec::new()).is_err());
        assert!(decode_bundle(&[bytes.clone(), vec![0]].concat(), &mut Vec::new()).is_err());
    }
}
