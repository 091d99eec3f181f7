//! Running one closure per rank on threads of this process.

use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Mutex};

use crate::communicator::Communicator;
use crate::error::Result;
use crate::transport::{spawn_group, RankGroup, TransportConfig};

impl RankGroup {
    /// Runs `f` on every rank concurrently, each with its world
    /// communicator, and returns the per-rank results in rank order.
    ///
    /// If a rank panics its endpoint is aborted, so peers blocked on it fail
    /// with a disconnection error instead of hanging, and the first panic is
    /// re-raised here once every rank has stopped.
    pub fn run<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(Communicator) -> R + Sync,
    {
        let first_panic: Mutex<Option<Box<dyn std::any::Any + Send>>> = Mutex::new(None);
        let results: Vec<Option<R>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .endpoints()
                .iter()
                .map(|ep| {
                    let (f, first_panic) = (&f, &first_panic);
                    s.spawn(move || {
                        let comm = Communicator::world(Arc::clone(ep));
                        match panic::catch_unwind(AssertUnwindSafe(|| f(comm))) {
                            Ok(r) => Some(r),
                            Err(payload) => {
                                first_panic
                                    .lock()
                                    .unwrap_or_else(|e| e.into_inner())
                                    .get_or_insert(payload);
                                ep.abort();
                                None
                            }
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(None))
                .collect()
        });
        if let Some(payload) = first_panic.into_inner().unwrap_or_else(|e| e.into_inner()) {
            panic::resume_unwind(payload);
        }
        results
            .into_iter()
            .map(|r| r.expect("no rank panicked"))
            .collect()
    }
}

/// Spawns a group of `p` ranks and runs `f` on each; see [`RankGroup::run`].
pub fn run_world<R, F>(p: usize, config: &TransportConfig, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(Communicator) -> R + Sync,
{
    Ok(spawn_group(p, config)?.run(f))
}
