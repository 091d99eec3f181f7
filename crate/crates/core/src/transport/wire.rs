//! TCP framing.
//!
//! Every envelope travels as one frame, all integers little-endian:
//!
//! ```text
//! [u32 frame_len][u32 src][u32 dst][u32 tag][u8 flags][payload ...]
//! ```
//!
//! `frame_len` counts the bytes that follow it (`13 + payload.len()`).
//! Flag bit 0 asks the receiver to acknowledge consumption; bit 1 marks an
//! acknowledgement, whose payload is empty and whose tag echoes the sequence
//! number of the acknowledged frame. Sequence numbers count the ack-requesting
//! frames on one directed connection, starting at 0.
//!
//! A connection opens with an 8-byte handshake: the magic `CKT1` followed by
//! the connecting rank as `u32`.

use std::io::{self, Read, Write};

pub const FLAG_REQUIRES_ACK: u8 = 0b01;
pub const FLAG_IS_ACK: u8 = 0b10;

/// Bytes of `src`, `dst`, `tag` and `flags`.
pub const HEADER_LEN: usize = 13;

pub const HANDSHAKE_MAGIC: [u8; 4] = *b"CKT1";

/// Upper bound on a single frame; anything larger is treated as corruption.
pub const MAX_FRAME_LEN: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub src: u32,
    pub dst: u32,
    pub tag: u32,
    pub flags: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn ack(src: u32, dst: u32, seq: u32) -> Self {
        Frame {
            src,
            dst,
            tag: seq,
            flags: FLAG_IS_ACK,
            payload: Vec::new(),
        }
    }

    pub fn requires_ack(&self) -> bool {
        self.flags & FLAG_REQUIRES_ACK != 0
    }

    pub fn is_ack(&self) -> bool {
        self.flags & FLAG_IS_ACK != 0
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + HEADER_LEN + self.payload.len());
        out.extend_from_slice(&((HEADER_LEN + self.payload.len()) as u32).to_le_bytes());
        out.extend_from_slice(&self.src.to_le_bytes());
        out.extend_from_slice(&self.dst.to_le_bytes());
        out.extend_from_slice(&self.tag.to_le_bytes());
        out.push(self.flags);
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream between
/// frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Frame>> {
    let mut len_buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut len_buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(len_buf) as usize;
    if !(HEADER_LEN..=MAX_FRAME_LEN).contains(&len) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame length {len} out of range"),
        ));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let payload = body.split_off(HEADER_LEN);
    Ok(Some(Frame {
        src: u32_at(&body, 0),
        dst: u32_at(&body, 4),
        tag: u32_at(&body, 8),
        flags: body[12],
        payload,
    }))
}

pub fn write_handshake<W: Write>(w: &mut W, rank: u32) -> io::Result<()> {
    let mut buf = [0u8; 8];
    buf[..4].copy_from_slice(&HANDSHAKE_MAGIC);
    buf[4..].copy_from_slice(&rank.to_le_bytes());
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_handshake<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if buf[..4] != HANDSHAKE_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad handshake magic",
        ));
    }
    Ok(u32_at(&buf, 4))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_with_length_prefix() {
        let f = Frame {
            src: 1,
            dst: 2,
            tag: 0x0304,
            flags: FLAG_REQUIRES_ACK,
            payload: b"abc".to_vec(),
        };
        let bytes = f.encode();
        assert_eq!(
            bytes,
            [
                16, 0, 0, 0, // frame_len = 13 + 3
                1, 0, 0, 0, 2, 0, 0, 0, 4, 3, 0, 0, 1, b'a', b'b', b'c'
            ]
        );
    }

    #[test]
    fn ack_frame_is_empty() {
        let a = Frame::ack(3, 0, 41);
        assert!(a.is_ack() && !a.requires_ack());
        assert_eq!(a.encode().len(), 4 + HEADER_LEN);
        assert_eq!(a.tag, 41);
    }

    #[test]
    fn stream_of_frames_then_eof() {
        let frames = vec![
            Frame::ack(0, 1, 7),
            Frame {
                src: 5,
                dst: 6,
                tag: 9,
                flags: 0,
                payload: vec![0xff; 1000],
            },
        ];
        let mut buf = Vec::new();
        for f in &frames {
            write_frame(&mut buf, f).unwrap();
        }
        let mut r = &buf[..];
        for f in &frames {
            assert_eq!(read_frame(&mut r).unwrap().as_ref(), Some(f));
        }
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn truncated_and_oversized_frames_are_rejected() {
        let bytes = Frame::ack(0, 1, 2).encode();
        let mut r = &bytes[..bytes.len() - 1];
        assert!(read_frame(&mut r).is_err());

        let mut r: &[u8] = &[5, 0, 0, 0, 0, 0, 0, 0, 0];
        assert!(read_frame(&mut r).is_err());
    }

    #[test]
    fn handshake_round_trip() {
        let mut buf = Vec::new();
        write_handshake(&mut buf, 12).unwrap();
        assert_eq!(read_handshake(&mut &buf[..]).unwrap(), 12);
        buf[0] = b'X';
        assert!(read_handshake(&mut &buf[..]).is_err());
    }
}
