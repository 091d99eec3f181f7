//! Parameter and result machinery shared by the collectives.
//!
//! Collectives are configured through builders whose setters can be called
//! in any order. Setters for in-parameters hand data to the call
//! (`send_buf`, `send_counts`, `recv_counts`, ...); `*_out` setters ask the
//! call to return a value it computed. The receive buffer is always
//! returned; every other out-value comes back in the [`ResultBundle`] in the
//! order it was requested.

use std::fmt;
use std::str::FromStr;

use crate::communicator::Communicator;
use crate::error::{Error, Result};

/// What a caller-supplied container may go through to hold a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizePolicy {
    /// The container is assumed large enough; a shortfall is an error.
    #[default]
    NoResize,
    /// Grown when too short, left alone otherwise.
    GrowOnly,
    /// Resized to exactly the required length.
    ResizeToFit,
}

/// Brings `container` to the length a result of `required` elements needs.
pub fn apply_resize<T: Default + Clone>(
    container: &mut Vec<T>,
    policy: ResizePolicy,
    required: usize,
    param: &'static str,
) -> Result<()> {
    match policy {
        ResizePolicy::ResizeToFit => container.resize(required, T::default()),
        ResizePolicy::GrowOnly if container.len() < required => {
            container.resize(required, T::default())
        }
        ResizePolicy::GrowOnly => {}
        ResizePolicy::NoResize if container.len() < required => {
            return Err(Error::Capacity {
                param,
                len: container.len(),
                required,
            })
        }
        ResizePolicy::NoResize => {}
    }
    Ok(())
}

/// A caller-provided container together with its resize policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Target<T> {
    pub container: Vec<T>,
    pub policy: ResizePolicy,
}

impl<T: Clone> Target<T> {
    pub fn new(container: Vec<T>, policy: ResizePolicy) -> Self {
        Target { container, policy }
    }

    /// Writes `values` into the container under its policy.
    pub(crate) fn fill(mut self, values: &[T], param: &'static str) -> Result<Vec<T>> {
        let required = values.len();
        match self.policy {
            ResizePolicy::NoResize if self.container.len() < required => {
                return Err(Error::Capacity {
                    param,
                    len: self.container.len(),
                    required,
                })
            }
            ResizePolicy::ResizeToFit => self.container.truncate(required),
            _ => {}
        }
        let keep = self.container.len().min(required);
        self.container[..keep].clone_from_slice(&values[..keep]);
        self.container.extend_from_slice(&values[keep..]);
        Ok(self.container)
    }
}

/// Parameters that can be requested as out-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutKind {
    RecvCounts,
    RecvDispls,
    SendCounts,
    SendDispls,
}

impl OutKind {
    pub fn name(self) -> &'static str {
        match self {
            OutKind::RecvCounts => "recv_counts",
            OutKind::RecvDispls => "recv_displs",
            OutKind::SendCounts => "send_counts",
            OutKind::SendDispls => "send_displs",
        }
    }
}

impl fmt::Display for OutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A request to return one computed parameter, optionally into a
/// caller-supplied container.
#[derive(Debug, Clone, PartialEq)]
pub struct OutRequest {
    pub which: OutKind,
    pub target: Option<Target<i32>>,
}

/// Ordered list of out-requests for one call.
#[derive(Debug, Clone, Default)]
pub(crate) struct OutRequests {
    requests: Vec<OutRequest>,
    duplicate: Option<OutKind>,
}

impl OutRequests {
    pub(crate) fn push(&mut self, which: OutKind, target: Option<Target<i32>>) {
        if self.requests.iter().any(|r| r.which == which) {
            self.duplicate.get_or_insert(which);
            return;
        }
        self.requests.push(OutRequest { which, target });
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self.duplicate {
            Some(kind) => Err(Error::DuplicateParameter(match kind {
                OutKind::RecvCounts => "recv_counts_out",
                OutKind::RecvDispls => "recv_displs_out",
                OutKind::SendCounts => "send_counts_out",
                OutKind::SendDispls => "send_displs_out",
            })),
            None => Ok(()),
        }
    }

    /// Builds the bundle; `value_of` supplies each requested parameter.
    pub(crate) fn into_bundle<T>(
        self,
        recv_buf: Vec<T>,
        mut value_of: impl FnMut(OutKind) -> Vec<i32>,
    ) -> Result<ResultBundle<T>> {
        let mut extras = Vec::with_capacity(self.requests.len());
        for req in self.requests {
            let value = value_of(req.which);
            let value = match req.target {
                Some(t) => t.fill(&value, req.which.name())?,
                None => value,
            };
            extras.push((req.which, Some(value)));
        }
        Ok(ResultBundle {
            recv_buf: Some(recv_buf),
            extras,
        })
    }
}

/// Values returned by a collective: the receive buffer, then each requested
/// out-parameter in request order. Each value can be extracted once.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle<T> {
    recv_buf: Option<Vec<T>>,
    extras: Vec<(OutKind, Option<Vec<i32>>)>,
}

impl<T> ResultBundle<T> {
    /// A bundle holding `recv_buf` and the given out-values, in order.
    pub fn from_parts(recv_buf: Vec<T>, extras: Vec<(OutKind, Vec<i32>)>) -> Self {
        ResultBundle {
            recv_buf: Some(recv_buf),
            extras: extras.into_iter().map(|(k, v)| (k, Some(v))).collect(),
        }
    }

    pub fn extract_recv_buf(&mut self) -> Result<Vec<T>> {
        self.recv_buf
            .take()
            .ok_or(Error::AlreadyExtracted("recv_buf"))
    }

    pub fn extract(&mut self, which: OutKind) -> Result<Vec<i32>> {
        let slot = self
            .extras
            .iter_mut()
            .find(|(k, _)| *k == which)
            .ok_or(Error::NotRequested(which.name()))?;
        slot.1.take().ok_or(Error::AlreadyExtracted(which.name()))
    }

    pub fn extract_recv_counts(&mut self) -> Result<Vec<i32>> {
        self.extract(OutKind::RecvCounts)
    }

    pub fn extract_recv_displs(&mut self) -> Result<Vec<i32>> {
        self.extract(OutKind::RecvDispls)
    }

    pub fn extract_send_counts(&mut self) -> Result<Vec<i32>> {
        self.extract(OutKind::SendCounts)
    }

    pub fn extract_send_displs(&mut self) -> Result<Vec<i32>> {
        self.extract(OutKind::SendDispls)
    }

    /// Requested out-parameters, in request order.
    pub fn requested(&self) -> Vec<OutKind> {
        self.extras.iter().map(|(k, _)| *k).collect()
    }

    /// The receive buffer, dropping anything else.
    pub fn into_recv_buf(mut self) -> Vec<T> {
        self.recv_buf.take().unwrap_or_default()
    }

    /// The receive buffer followed by the remaining out-values in request
    /// order.
    pub fn into_parts(self) -> (Vec<T>, Vec<Vec<i32>>) {
        (
            self.recv_buf.unwrap_or_default(),
            self.extras.into_iter().filter_map(|(_, v)| v).collect(),
        )
    }
}

/// How much checking a call performs before and during communication.
/// `Heavy` includes every `Light` check and may exchange extra messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub enum AssertionLevel {
    None,
    #[default]
    Light,
    Heavy,
}

pub const ASSERT_LEVEL_ENV: &str = "ASSERT_LEVEL";

impl AssertionLevel {
    /// Level selected by the `ASSERT_LEVEL` environment variable, `Light`
    /// when unset or unrecognized.
    pub fn from_env() -> Self {
        std::env::var(ASSERT_LEVEL_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_default()
    }

    pub fn light(self) -> bool {
        self >= AssertionLevel::Light
    }

    pub fn heavy(self) -> bool {
        self >= AssertionLevel::Heavy
    }
}

impl FromStr for AssertionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AssertionLevel::None),
            "light" => Ok(AssertionLevel::Light),
            "heavy" => Ok(AssertionLevel::Heavy),
            other => Err(Error::InvalidArgument(format!(
                "unknown assertion level {other:?}"
            ))),
        }
    }
}

impl fmt::Display for AssertionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssertionLevel::None => "none",
            AssertionLevel::Light => "light",
            AssertionLevel::Heavy => "heavy",
        })
    }
}

/// Collects the names of absent required parameters so that a call reports
/// all of them at once.
#[derive(Debug, Default)]
pub(crate) struct Missing(Vec<&'static str>);

impl Missing {
    pub(crate) fn require<T>(&mut self, value: &Option<T>, name: &'static str) -> &mut Self {
        if value.is_none() {
            self.0.push(name);
        }
        self
    }

    pub(crate) fn finish(&self, op: &'static str) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingParameters {
                op,
                missing: self.0.clone(),
            })
        }
    }
}

/// Local shape check: one non-negative entry per rank.
pub fn check_counts(counts: &[i32], size: usize, param: &'static str) -> Result<()> {
    if counts.len() != size {
        return Err(Error::WrongLength {
            param,
            expected: size,
            actual: counts.len(),
        });
    }
    if let Some((index, &value)) = counts.iter().enumerate().find(|(_, &c)| c < 0) {
        return Err(Error::NegativeCount {
            param,
            index,
            value,
        });
    }
    Ok(())
}

/// Exclusive prefix sum with overflow detection.
pub fn exclusive_prefix_sum(counts: &[i32], param: &'static str) -> Result<Vec<i32>> {
    let mut out = Vec::with_capacity(counts.len());
    let mut acc: i32 = 0;
    for &c in counts {
        out.push(acc);
        acc = acc
            .checked_add(c)
            .ok_or(Error::DisplacementOverflow { param })?;
    }
    Ok(out)
}

/// Checks `send_counts` at the given level.
///
/// `Light` verifies the local shape. `Heavy` additionally transposes the
/// count matrix with an all-to-all and, when `expected_recv_counts` is given,
/// compares it against what every peer actually sends. Mismatches are
/// exchanged so that every rank reports the same first violation.
pub fn validate_counts(
    comm: &Communicator,
    send_counts: &[i32],
    expected_recv_counts: Option<&[i32]>,
    level: AssertionLevel,
) -> Result<()> {
    if !level.light() {
        return Ok(());
    }
    let shape = check_counts(send_counts, comm.size(), "send_counts").and_then(|()| {
        expected_recv_counts.map_or(Ok(()), |rc| check_counts(rc, comm.size(), "recv_counts"))
    });
    if !level.heavy() {
        return shape;
    }
    crate::collectives::agree(comm, "alltoallv", shape)?;
    let incoming = crate::collectives::alltoall_plain(comm, send_counts, 1)?;
    // (sender, sent, expected) for the first mismatch seen here, or sender = -1.
    let mut local: (i64, i64, i64) = (-1, 0, 0);
    if let Some(expected) = expected_recv_counts {
        if let Some(s) = (0..comm.size()).find(|&s| incoming[s] != expected[s]) {
            local = (s as i64, incoming[s] as i64, expected[s] as i64);
        }
    }
    let all = crate::collectives::allgather_plain(comm, &[local])?;
    match all.iter().enumerate().find(|(_, m)| m.0 >= 0) {
        Some((receiver, &(sender, sent, expected))) => Err(Error::CountMismatch {
            sender: sender as usize,
            receiver,
            sent,
            expected,
        }),
        None => Ok(()),
    }
}
