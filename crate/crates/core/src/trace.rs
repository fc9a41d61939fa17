//! Time-ordered log of cache events. The trace is what retention reports and
//! attention-mask reconstruction are computed from.

use std::io::{self, Write};

use thiserror::Error;

/// What happened to a token at one step. `sub_cache` is 0 for the sink and
/// 1-based for sub-caches; for `FinalDiscard` it names the boundary at which
/// the token left residency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    /// Token appended to the sink buffer during the fill phase.
    SinkAdd,
    /// Token inserted into a sub-cache (accepting or eager path).
    Accept,
    /// Oldest token displaced from a full sub-cache and carried onward.
    CascadeEvict,
    /// Selection at a full, non-accepting boundary kept the carried token.
    SelectionKeepIncoming,
    /// Selection at a full, non-accepting boundary kept the resident token.
    SelectionKeepResident,
    /// Token permanently left the cache.
    FinalDiscard,
}

impl TraceEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SinkAdd => "sink_add",
            Self::Accept => "accept",
            Self::CascadeEvict => "cascade_evict",
            Self::SelectionKeepIncoming => "selection_keep_incoming",
            Self::SelectionKeepResident => "selection_keep_resident",
            Self::FinalDiscard => "final_discard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: TraceEventKind,
    pub origin_pos: u64,
    pub sub_cache: usize,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace covers {got} inserted tokens, expected {expected}")]
    Incomplete { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Append-only event log, non-decreasing in step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvictionTrace {
    events: Vec<TraceEvent>,
}

impl EvictionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: TraceEvent) {
        debug_assert!(self
            .events
            .last()
            .is_none_or(|last| last.step <= event.step));
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Drop all events but keep the allocation; replay loops call this every
    /// step to run in constant memory.
    pub fn clear(&mut self) {
        self.events.clear();
    }

    /// Flat CSV: `step,kind,origin_pos,sub_cache`, one row per event.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,kind,origin_pos,sub_cache")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{}",
                e.step,
                e.kind.as_str(),
                e.origin_pos,
                e.sub_cache
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}
