//! Message-passing collectives with named parameters, parameter inference,
//! explicit memory policies and completion-gated non-blocking results.
//!
//! A group of ranks is either a set of threads in this process exchanging
//! messages through shared mailboxes, or a set of processes connected over
//! TCP. Each rank drives a [`Communicator`]:
//!
//! ```
//! use commkit::{run_world, TransportConfig};
//!
//! let sums = run_world(4, &TransportConfig::inproc(), |comm| {
//!     let v = vec![comm.rank() as u64; 2];
//!     comm.allgatherv().send_buf(&v).call().unwrap().into_recv_buf().iter().sum::<u64>()
//! })
//! .unwrap();
//! assert_eq!(sums, vec![12; 4]);
//! ```

pub mod collectives;
pub mod communicator;
pub mod datatype;
pub mod distribution;
pub mod error;
pub mod nonblocking;
pub mod params;
mod runner;
pub mod serialization;
pub mod transport;

pub use collectives::{with_flattened, Flattened, ReduceOp};
pub use communicator::{Communicator, InternalTag, Message, Settings};
pub use datatype::{Codec, Plain};
pub use distribution::Distribution;
pub use error::{CodecError, Error, Result};
pub use nonblocking::{NonBlockingResult, PendingOp, RequestPool};
pub use params::{AssertionLevel, OutKind, ResizePolicy, ResultBundle};
pub use runner::run_world;
pub use serialization::{as_deserializable, as_serialized, as_serialized_with, Format, Serialized};
pub use transport::{
    spawn_group, Endpoint, RankGroup, TransportConfig, TransportKind, TransportStats,
};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
pub struct ReadmeDoctests;
