use std::io;

use thiserror::Error;

/// Errors raised by the transport, the codecs and the collectives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("a rank group needs at least one rank")]
    EmptyGroup,

    #[error("rank {rank} is out of range for a group of size {size}")]
    InvalidRank { rank: usize, size: usize },

    #[error("peer rank {peer} disconnected while rank {rank} was waiting")]
    PeerDisconnected { rank: usize, peer: usize },

    #[error("all peers of rank {rank} disconnected while it was waiting")]
    GroupShutDown { rank: usize },

    #[error("tcp transport: {context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("user tag {0} exceeds the 16-bit tag space")]
    TagOutOfRange(u32),

    #[error("communicator context ids exhausted")]
    ContextExhausted,

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("missing required parameter(s) for {op}: {}", missing.join(", "))]
    MissingParameters {
        op: &'static str,
        missing: Vec<&'static str>,
    },

    #[error("parameter {0} was passed more than once")]
    DuplicateParameter(&'static str),

    #[error("{op}: conflicting parameters: {detail}")]
    ConflictingParameters { op: &'static str, detail: String },

    #[error("buffer {param} has length {len} but {required} elements are required and its resize policy is no_resize")]
    Capacity {
        param: &'static str,
        len: usize,
        required: usize,
    },

    #[error("{param} has {actual} entries, expected one per rank ({expected})")]
    WrongLength {
        param: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{param}[{index}] = {value} is negative")]
    NegativeCount {
        param: &'static str,
        index: usize,
        value: i32,
    },

    #[error("{param}: displacement overflows a 32-bit count")]
    DisplacementOverflow { param: &'static str },

    #[error("{param}: segment {index} ({displ}..{end}) exceeds buffer of length {len}")]
    SegmentOutOfRange {
        param: &'static str,
        index: usize,
        displ: i32,
        end: i64,
        len: usize,
    },

    #[error("count mismatch: rank {sender} sends {sent} element(s) to rank {receiver}, which expects {expected}")]
    CountMismatch {
        sender: usize,
        receiver: usize,
        sent: i64,
        expected: i64,
    },

    #[error("{op}: contributions differ between ranks ({detail})")]
    UnequalContributions { op: &'static str, detail: String },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{op}: rank {rank} rejected its arguments")]
    PeerRejected { op: &'static str, rank: usize },

    #[error("{0} was already extracted from the result")]
    AlreadyExtracted(&'static str),

    #[error("{0} was not requested as an out-parameter")]
    NotRequested(&'static str),

    #[error("non-blocking result was already consumed")]
    AlreadyConsumed,
}

/// Errors from encoding or decoding payload bytes.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("payload of {len} bytes is not a multiple of the element width {width}")]
    IndivisibleLength { len: usize, width: usize },

    #[error("unknown serialization format tag {0:#04x}")]
    UnknownFormat(u8),

    #[error("malformed serialized payload: {0}")]
    Malformed(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
