#![allow(dead_code)]

use commkit::{run_world, Communicator, TransportConfig, TransportKind};

pub fn kinds() -> [TransportKind; 2] {
    [TransportKind::InProc, TransportKind::Tcp]
}

pub fn run<R: Send>(p: usize, kind: TransportKind, f: impl Fn(Communicator) -> R + Sync) -> Vec<R> {
    run_world(p, &TransportConfig::of_kind(kind), f).expect("group setup")
}

/// Runs `f` on both transports and checks they agree.
pub fn run_both<R: Send + PartialEq + std::fmt::Debug>(
    p: usize,
    f: impl Fn(Communicator) -> R + Sync,
) -> Vec<R> {
    let a = run(p, TransportKind::InProc, &f);
    let b = run(p, TransportKind::Tcp, &f);
    assert_eq!(a, b, "inproc and tcp disagree for p={p}");
    a
}
