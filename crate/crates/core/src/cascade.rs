//! Cascading KV cache: a sink buffer plus N circular sub-caches with
//! exponentially thinning acceptance rates and EMA-scored token selection.
//!
//! Sub-cache 1 accepts every offered token; sub-cache i accepts only on steps
//! where `step mod 2^(i-1) == 0`. A token displaced from a full sub-cache is
//! carried to the next one. At a full, non-accepting boundary the carried
//! token competes with the resident newest token: the higher EMA score stays,
//! the lower is discarded. Tokens carried past the last sub-cache are gone
//! for good. The whole walk is O(N) per insertion and never reallocates.

use std::collections::HashMap;

use thiserror::Error;

use crate::ring::{CacheEntry, EntryRef, RingError, RingStore};
use crate::scalar::{cast, Scalar};
use crate::trace::{EvictionTrace, TraceEvent, TraceEventKind};

/// How eviction decisions are shared across attention heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadPolicy {
    /// One decision stream for all heads; scores reduce to a single scalar
    /// per token and all heads share one resident set.
    Homogeneous,
    /// One decision stream per key-value head; resident sets may diverge.
    Independent,
}

/// Reduction applied across the query heads feeding one decision stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadReduction {
    Mean,
    Max,
    Median,
}

#[derive(Debug, Clone)]
pub struct CascadeConfig {
    /// Total non-sink capacity |C|, split evenly across sub-caches.
    pub total_capacity: usize,
    /// Number of sub-caches N.
    pub num_cascades: usize,
    /// Sink size α; the first α stream tokens are kept forever and do not
    /// count against `total_capacity`.
    pub sink_size: usize,
    /// EMA coefficient γ for score updates.
    pub ema_gamma: f64,
    /// When false, a token arriving at a full non-accepting boundary is
    /// always discarded (fixed heuristic pattern).
    pub selection_enabled: bool,
    pub head_policy: HeadPolicy,
    pub head_reduction: HeadReduction,
}

impl CascadeConfig {
    /// Defaults mirror the reference setup: selection on, independent heads
    /// with max reduction, γ = 0.9999.
    pub fn new(total_capacity: usize, num_cascades: usize, sink_size: usize) -> Self {
        Self {
            total_capacity,
            num_cascades,
            sink_size,
            ema_gamma: 0.9999,
            selection_enabled: true,
            head_policy: HeadPolicy::Independent,
            head_reduction: HeadReduction::Max,
        }
    }

    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.total_capacity == 0 || self.num_cascades == 0 {
            return Err(CascadeError::InvalidConfig(
                "capacity and cascade count must be positive",
            ));
        }
        if !self.total_capacity.is_multiple_of(self.num_cascades) {
            return Err(CascadeError::UnevenSubCaches {
                total: self.total_capacity,
                cascades: self.num_cascades,
            });
        }
        if !(0.0..=1.0).contains(&self.ema_gamma) {
            return Err(CascadeError::InvalidConfig("ema_gamma must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn sub_capacity(&self) -> usize {
        self.total_capacity / self.num_cascades
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CascadeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("total capacity {total} is not divisible by {cascades} sub-caches")]
    UnevenSubCaches { total: usize, cascades: usize },
    #[error("origin {got} must exceed every previously inserted origin (last was {last})")]
    NonMonotonicOrigin { last: u64, got: u64 },
    #[error("score set does not align with residents: {0}")]
    ScoreAlignment(String),
    #[error("token span overflows u64 for this configuration")]
    SpanOverflow,
    #[error("sparsity undefined: sequence length {seq_len} is shorter than capacity {capacity}")]
    UndefinedSparsity { seq_len: u64, capacity: u64 },
    #[error(transparent)]
    Ring(#[from] RingError),
}

/// Acceptance predicate: sub-cache `cascade_index` (1-based) admits offered
/// tokens on steps with `step mod 2^(cascade_index-1) == 0`. Cascade 1
/// accepts always.
pub fn accepts_on(cascade_index: usize, step: u64) -> bool {
    debug_assert!(cascade_index >= 1);
    let shift = cascade_index - 1;
    if shift >= 64 {
        return step == 0;
    }
    step.is_multiple_of(1u64 << shift)
}

/// Total token span S̃ = (|C|/N) · Σ_{i=1..N} 2^(i-1): the stream distance
/// the resident window covers once every sub-cache cycles at steady state.
pub fn token_span(config: &CascadeConfig) -> Result<u64, CascadeError> {
    config.validate()?;
    let per = config.sub_capacity() as u128;
    let mut sum: u128 = 0;
    for i in 0..config.num_cascades {
        if i >= 127 {
            return Err(CascadeError::SpanOverflow);
        }
        sum += 1u128 << i;
    }
    let span = per * sum;
    u64::try_from(span).map_err(|_| CascadeError::SpanOverflow)
}

/// `(overall, window)` sparsity: `1 - |C|/S` and `1 - |C|/S̃`.
pub fn sparsity(config: &CascadeConfig, seq_len: u64) -> Result<(f64, f64), CascadeError> {
    config.validate()?;
    let capacity = config.total_capacity as u64;
    if seq_len < capacity {
        return Err(CascadeError::UndefinedSparsity { seq_len, capacity });
    }
    let span = token_span(config)? as f64;
    let c = capacity as f64;
    Ok((1.0 - c / seq_len as f64, 1.0 - c / span))
}

/// Probability model for retrieval: a uniformly placed target is reachable
/// iff it falls inside the span, so expected accuracy is `min(1, span/len)`.
pub fn expected_retrieval_accuracy(span: u64, context_len: u64) -> f64 {
    assert!(span > 0 && context_len > 0);
    (span as f64 / context_len as f64).min(1.0)
}

/// The cascading cache for one token stream (one layer / head-group).
#[derive(Debug, Clone)]
pub struct CascadeCache<T> {
    config: CascadeConfig,
    dim: usize,
    sink: RingStore<T>,
    subs: Vec<RingStore<T>>,
    /// Global insertion counter; ticks once per post-sink insertion.
    step: u64,
    last_origin: Option<u64>,
    trace: EvictionTrace,
}

impl<T: Scalar> CascadeCache<T> {
    pub fn new(config: CascadeConfig, dim: usize) -> Result<Self, CascadeError> {
        config.validate()?;
        let sub_cap = config.sub_capacity();
        let subs = (0..config.num_cascades)
            .map(|_| RingStore::new(sub_cap, dim))
            .collect();
        Ok(Self {
            sink: RingStore::new(config.sink_size, dim),
            subs,
            config,
            dim,
            step: 0,
            last_origin: None,
            trace: EvictionTrace::new(),
        })
    }

    /// Build a cache in a given resident state, for analysis and tests.
    /// `per_cascade` is ordered sub-cache 1 first, each slice oldest→newest.
    pub fn with_residents(
        config: CascadeConfig,
        dim: usize,
        sink_origins: &[u64],
        per_cascade: &[Vec<u64>],
    ) -> Result<Self, CascadeError> {
        let mut cache = Self::new(config, dim)?;
        if per_cascade.len() != cache.config.num_cascades {
            return Err(CascadeError::InvalidConfig(
                "one origin list per sub-cache required",
            ));
        }
        if sink_origins.len() > cache.config.sink_size {
            return Err(CascadeError::InvalidConfig(
                "more sink origins than sink slots",
            ));
        }
        if per_cascade
            .iter()
            .any(|origins| origins.len() > cache.config.sub_capacity())
        {
            return Err(CascadeError::InvalidConfig(
                "sub-cache origin list exceeds its capacity",
            ));
        }
        let mut all: Vec<u64> = Vec::new();
        for &o in sink_origins {
            cache.sink.push_overwrite(CacheEntry::new(
                vec![T::zero(); dim],
                vec![T::zero(); dim],
                T::zero(),
                o,
            ))?;
            all.push(o);
        }
        // Deeper sub-caches hold older tokens; validate the cross-cache and
        // in-cache ordering the real insertion path maintains.
        for (idx, origins) in per_cascade.iter().enumerate().rev() {
            for &o in origins {
                cache.subs[idx].push_overwrite(CacheEntry::new(
                    vec![T::zero(); dim],
                    vec![T::zero(); dim],
                    T::zero(),
                    o,
                ))?;
                all.push(o);
            }
        }
        if all.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CascadeError::InvalidConfig(
                "origins must be strictly increasing sink-first, deepest sub-cache next",
            ));
        }
        cache.last_origin = all.last().copied();
        Ok(cache)
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn sink(&self) -> &RingStore<T> {
        &self.sink
    }

    pub fn sub_cache(&self, index: usize) -> &RingStore<T> {
        &self.subs[index - 1]
    }

    pub fn num_cascades(&self) -> usize {
        self.subs.len()
    }

    /// Next origin the stream is expected to deliver.
    pub fn expected_next_origin(&self) -> u64 {
        self.last_origin.map_or(0, |o| o + 1)
    }

    pub fn resident_count(&self) -> usize {
        self.sink.len() + self.subs.iter().map(|s| s.len()).sum::<usize>()
    }

    /// Resident entries in ascending stream order: sink first, then the
    /// deepest sub-cache, ending with sub-cache 1's newest token.
    pub fn iter_residents(&self) -> impl Iterator<Item = EntryRef<'_, T>> + '_ {
        self.sink
            .iter()
            .chain(self.subs.iter().rev().flat_map(|s| s.iter()))
    }

    pub fn resident_origins(&self) -> Vec<u64> {
        self.iter_residents().map(|e| e.origin_pos).collect()
    }

    pub fn is_resident(&self, origin: u64) -> bool {
        self.iter_residents().any(|e| e.origin_pos == origin)
    }

    /// 1-based sub-cache currently holding `origin` (0 = sink).
    pub fn residence_of(&self, origin: u64) -> Option<usize> {
        if self.sink.iter().any(|e| e.origin_pos == origin) {
            return Some(0);
        }
        for (idx, sub) in self.subs.iter().enumerate() {
            if sub.iter().any(|e| e.origin_pos == origin) {
                return Some(idx + 1);
            }
        }
        None
    }

    /// Oldest resident origin outside the sink.
    pub fn oldest_nonsink_origin(&self) -> Option<u64> {
        self.subs
            .iter()
            .rev()
            .find_map(|s| s.peek_oldest().map(|e| e.origin_pos))
    }

    pub fn score_of(&self, origin: u64) -> Option<T> {
        self.iter_residents()
            .find(|e| e.origin_pos == origin)
            .map(|e| e.score)
    }

    pub fn trace(&self) -> &EvictionTrace {
        &self.trace
    }

    /// Clear the accumulated trace (allocation kept). Long replays that only
    /// inspect per-insertion events call this every step.
    pub fn clear_trace(&mut self) {
        self.trace.clear();
    }

    fn record(&mut self, kind: TraceEventKind, origin_pos: u64, sub_cache: usize) {
        self.trace.push(TraceEvent {
            step: self.step,
            kind,
            origin_pos,
            sub_cache,
        });
    }

    /// Insert one token, running the full cascade walk. Returns the trace
    /// events this insertion generated (also appended to the internal log).
    ///
    /// Walk order per sub-cache: accepting+free → insert, stop;
    /// accepting+full → insert, carry the displaced oldest onward;
    /// not-accepting+free → eager insert, stop; not-accepting+full → token
    /// selection against the resident newest, stop. A token carried past the
    /// last sub-cache is discarded. The step counter ticks only after
    /// post-sink insertions.
    pub fn add_token(&mut self, entry: CacheEntry<T>) -> Result<&[TraceEvent], CascadeError> {
        if entry.dim() != self.dim {
            return Err(RingError::DimensionMismatch {
                expected: self.dim,
                got: entry.dim(),
            }
            .into());
        }
        if let Some(last) = self.last_origin {
            if entry.origin_pos <= last {
                return Err(CascadeError::NonMonotonicOrigin {
                    last,
                    got: entry.origin_pos,
                });
            }
        }
        let mark = self.trace.len();
        self.last_origin = Some(entry.origin_pos);

        if !self.sink.is_full() {
            let origin = entry.origin_pos;
            self.sink.push_overwrite(entry)?;
            self.record(TraceEventKind::SinkAdd, origin, 0);
            return Ok(&self.trace.events()[mark..]);
        }

        let mut carried = Some(entry);
        for idx in 1..=self.subs.len() {
            let token = carried
                .take()
                .expect("walk only continues while carrying a token");
            let origin = token.origin_pos;
            let accepting = accepts_on(idx, self.step);
            let full = self.subs[idx - 1].is_full();
            if accepting {
                let evicted = self.subs[idx - 1].push_overwrite(token)?;
                self.record(TraceEventKind::Accept, origin, idx);
                match evicted {
                    None => break,
                    Some(old) => {
                        self.record(TraceEventKind::CascadeEvict, old.origin_pos, idx);
                        carried = Some(old);
                    }
                }
            } else if !full {
                // Eager add: a non-accepting sub-cache with free space takes
                // the token rather than discarding it.
                self.subs[idx - 1].push_overwrite(token)?;
                self.record(TraceEventKind::Accept, origin, idx);
                break;
            } else {
                let (newest_score, newest_origin) = self.subs[idx - 1]
                    .peek_newest()
                    .map(|e| (e.score, e.origin_pos))
                    .expect("full sub-cache has a newest entry");
                if self.config.selection_enabled && token.score > newest_score {
                    let loser = self.subs[idx - 1].evict_newest()?;
                    self.subs[idx - 1].push_overwrite(token)?;
                    self.record(TraceEventKind::SelectionKeepIncoming, origin, idx);
                    self.record(TraceEventKind::FinalDiscard, loser.origin_pos, idx);
                } else {
                    // Ties keep the resident token.
                    if self.config.selection_enabled {
                        self.record(TraceEventKind::SelectionKeepResident, newest_origin, idx);
                    }
                    self.record(TraceEventKind::FinalDiscard, origin, idx);
                }
                break;
            }
        }
        if let Some(token) = carried {
            let idx = self.subs.len();
            self.record(TraceEventKind::FinalDiscard, token.origin_pos, idx);
        }
        self.step += 1;
        Ok(&self.trace.events()[mark..])
    }

    /// One EMA timestep: every resident token's score becomes
    /// `γ·μ + (1-γ)·s` with `s` looked up by origin. The score set must match
    /// the residents exactly.
    pub fn update_scores(&mut self, scores: &HashMap<u64, T>) -> Result<(), CascadeError> {
        let residents = self.resident_count();
        if scores.len() != residents {
            return Err(CascadeError::ScoreAlignment(format!(
                "{} scores for {} residents",
                scores.len(),
                residents
            )));
        }
        let gamma: T = cast(self.config.ema_gamma);
        let one_minus: T = cast(1.0 - self.config.ema_gamma);
        let apply = |store: &mut RingStore<T>| -> Result<(), CascadeError> {
            for i in 0..store.len() {
                let origin = store.origin_at(i);
                let s = *scores.get(&origin).ok_or_else(|| {
                    CascadeError::ScoreAlignment(format!("no score for resident origin {origin}"))
                })?;
                let updated = gamma * store.score_at(i) + one_minus * s;
                store.set_score_at(i, updated);
            }
            Ok(())
        };
        // Sink scores are updated too; sink tokens are unevictable so this
        // only affects reporting.
        apply(&mut self.sink)?;
        for sub in &mut self.subs {
            apply(sub)?;
        }
        Ok(())
    }

    /// Fold one prefill chunk's accumulated score mass into the residents:
    /// `μ ← decay·μ + contribution`, aligned with [`Self::iter_residents`]
    /// order (the order chunk attention reports contributions in).
    pub fn fold_chunk_scores(
        &mut self,
        decay: T,
        origins: &[u64],
        contributions: &[T],
    ) -> Result<(), CascadeError> {
        let residents = self.resident_count();
        if origins.len() != residents || contributions.len() != residents {
            return Err(CascadeError::ScoreAlignment(format!(
                "{} contributions for {} residents",
                contributions.len(),
                residents
            )));
        }
        let sink_len = self.sink.len();
        let mut cursor = 0usize;
        let apply_store =
            |store: &mut RingStore<T>, cursor: &mut usize| -> Result<(), CascadeError> {
                for i in 0..store.len() {
                    let origin = store.origin_at(i);
                    if origins[*cursor] != origin {
                        return Err(CascadeError::ScoreAlignment(format!(
                            "contribution {} is for origin {}, resident is {}",
                            *cursor, origins[*cursor], origin
                        )));
                    }
                    let updated = decay * store.score_at(i) + contributions[*cursor];
                    store.set_score_at(i, updated);
                    *cursor += 1;
                }
                Ok(())
            };
        apply_store(&mut self.sink, &mut cursor)?;
        debug_assert_eq!(cursor, sink_len);
        for idx in (0..self.subs.len()).rev() {
            apply_store(&mut self.subs[idx], &mut cursor)?;
        }
        Ok(())
    }

    /// Positional-encoding re-indexing: residents sorted by origin receive
    /// consecutive indices 0,1,2,…; gaps in the stream collapse.
    pub fn positional_indices(&self) -> Vec<(u64, usize)> {
        let out: Vec<(u64, usize)> = self
            .iter_residents()
            .enumerate()
            .map(|(i, e)| (e.origin_pos, i))
            .collect();
        debug_assert!(out.windows(2).all(|w| w[0].0 < w[1].0));
        out
    }
}
