//! Synthetic streams and baseline policies: the machinery that makes the
//! cache's behavioral claims testable without a pretrained model.
//!
//! Policy replays inject each token's profile weight directly as its score
//! instead of running attention, which isolates the eviction machinery and
//! keeps a half-million-step replay in the tens of nanoseconds per token.
//! Attention-derived scores are exercised separately through the prefill
//! driver.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cascade::{CascadeCache, CascadeConfig, CascadeError};
use crate::ring::CacheEntry;
use crate::trace::{EvictionTrace, TraceEventKind};

/// Shape of the synthetic score stream. Weights stand in for the attention
/// mass a token would attract; a "heavy" token models a passkey.
#[derive(Debug, Clone)]
pub enum ScoreProfile {
    /// Every token draws a weight uniformly from [0, 1).
    UniformRandom,
    /// One marked token with a fixed weight; all others score zero.
    SingleHeavy { pos: u64, weight: f64 },
    /// Several marked tokens; all others score zero.
    MultiHeavy(Vec<(u64, f64)>),
}

#[derive(Debug, Clone)]
pub struct SyntheticStream {
    pub length: usize,
    pub profile: ScoreProfile,
    pub seed: u64,
}

impl SyntheticStream {
    /// Materialized per-token weights.
    pub fn weights(&self) -> Vec<f64> {
        match &self.profile {
            ScoreProfile::UniformRandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.length).map(|_| rng.random::<f64>()).collect()
            }
            ScoreProfile::SingleHeavy { pos, weight } => {
                let mut w = vec![0.0; self.length];
                if (*pos as usize) < self.length {
                    w[*pos as usize] = *weight;
                }
                w
            }
            ScoreProfile::MultiHeavy(marks) => {
                let mut w = vec![0.0; self.length];
                for (pos, weight) in marks {
                    if (*pos as usize) < self.length {
                        w[*pos as usize] = *weight;
                    }
                }
                w
            }
        }
    }

    pub fn marked_positions(&self) -> Vec<u64> {
        match &self.profile {
            ScoreProfile::UniformRandom => Vec::new(),
            ScoreProfile::SingleHeavy { pos, .. } => vec![*pos],
            ScoreProfile::MultiHeavy(marks) => marks.iter().map(|(p, _)| *p).collect(),
        }
    }
}

/// Eviction policy under test. All four are expressed through the cascading
/// cache; the first two are its degenerate configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    SlidingWindow,
    StreamingLlmSink,
    CascadeNoSelection,
    CascadeFull,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SlidingWindow => "sliding_window",
            Self::StreamingLlmSink => "streaming_llm_sink",
            Self::CascadeNoSelection => "cascade_no_selection",
            Self::CascadeFull => "cascade_full",
        }
    }

    pub const ALL: [PolicyKind; 4] = [
        Self::SlidingWindow,
        Self::StreamingLlmSink,
        Self::CascadeNoSelection,
        Self::CascadeFull,
    ];

    /// Cache configuration realizing this policy on top of `base`.
    pub fn effective_config(self, base: &CascadeConfig) -> CascadeConfig {
        let mut config = base.clone();
        match self {
            Self::SlidingWindow => {
                config.num_cascades = 1;
                config.sink_size = 0;
                config.selection_enabled = false;
            }
            Self::StreamingLlmSink => {
                config.num_cascades = 1;
                config.selection_enabled = false;
            }
            Self::CascadeNoSelection => config.selection_enabled = false,
            Self::CascadeFull => config.selection_enabled = true,
        }
        config
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("stream length {len} is shorter than the cache capacities ({need})")]
    StreamTooShort { len: usize, need: usize },
    #[error(transparent)]
    Cache(#[from] CascadeError),
}

/// Outcome for one marked token.
#[derive(Debug, Clone)]
pub struct RetentionRecord {
    pub policy: PolicyKind,
    pub num_cascades: usize,
    pub capacity: usize,
    pub seed: u64,
    pub marked_pos: u64,
    pub resident: bool,
    /// Insertions the token outlived (stream length - pos when resident).
    pub survival_steps: u64,
    pub empirical_span: u64,
    /// Where the token sits at stream end: 0 = sink, 1-based sub-cache.
    pub final_sub_cache: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RetentionReport {
    pub records: Vec<RetentionRecord>,
    pub empirical_span: u64,
    pub final_residents: usize,
}

impl RetentionReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "policy,N,capacity,seed,marked_pos,resident,survival_steps,empirical_span"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.policy.as_str(),
                r.num_cascades,
                r.capacity,
                r.seed,
                r.marked_pos,
                r.resident,
                r.survival_steps,
                r.empirical_span
            )?;
        }
        Ok(())
    }
}

/// Replay `stream` through `policy`, feeding profile weights as scores.
/// Runs in constant memory: the trace is drained every step.
pub fn run_retention(
    policy: PolicyKind,
    base_config: &CascadeConfig,
    stream: &SyntheticStream,
) -> Result<RetentionReport, WorkloadError> {
    let config = policy.effective_config(base_config);
    let need = config.total_capacity + config.sink_size;
    if stream.length < need {
        return Err(WorkloadError::StreamTooShort {
            len: stream.length,
            need,
        });
    }
    let weights = stream.weights();
    let marked = stream.marked_positions();
    let mut killed_at: Vec<Option<u64>> = vec![None; marked.len()];

    let mut cache = CascadeCache::<f64>::new(config.clone(), 0)?;
    for origin in 0..stream.length as u64 {
        let events = cache.add_token(CacheEntry::scalar(origin, weights[origin as usize]))?;
        for e in events {
            if e.kind == TraceEventKind::FinalDiscard {
                if let Some(slot) = marked.iter().position(|&m| m == e.origin_pos) {
                    killed_at[slot] = Some(origin);
                }
            }
        }
        cache.clear_trace();
    }

    let empirical_span = cache
        .oldest_nonsink_origin()
        .map(|oldest| stream.length as u64 - oldest)
        .unwrap_or(0);
    let records = marked
        .iter()
        .zip(&killed_at)
        .map(|(&pos, killed)| {
            let resident = killed.is_none() && pos < stream.length as u64;
            RetentionRecord {
                policy,
                num_cascades: config.num_cascades,
                capacity: config.total_capacity,
                seed: stream.seed,
                marked_pos: pos,
                resident,
                survival_steps: killed.unwrap_or(stream.length as u64).saturating_sub(pos),
                empirical_span,
                final_sub_cache: if resident {
                    cache.residence_of(pos)
                } else {
                    None
                },
            }
        })
        .collect();
    Ok(RetentionReport {
        records,
        empirical_span,
        final_residents: cache.resident_count(),
    })
}

/// Replay a stream and keep the full eviction trace (for mask work).
pub fn replay_trace(
    policy: PolicyKind,
    base_config: &CascadeConfig,
    stream: &SyntheticStream,
) -> Result<(EvictionTrace, CascadeCache<f64>), WorkloadError> {
    let config = policy.effective_config(base_config);
    let weights = stream.weights();
    let mut cache = CascadeCache::<f64>::new(config, 0)?;
    for origin in 0..stream.length as u64 {
        cache.add_token(CacheEntry::scalar(origin, weights[origin as usize]))?;
    }
    let trace = cache.trace().clone();
    Ok((trace, cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::token_span;

    fn base(total: usize, n: usize, sink: usize) -> CascadeConfig {
        CascadeConfig::new(total, n, sink)
    }

    #[test]
    fn sliding_window_cannot_save_early_tokens() {
        let stream = SyntheticStream {
            length: 512,
            profile: ScoreProfile::SingleHeavy {
                pos: 0,
                weight: 100.0,
            },
            seed: 0,
        };
        let report = run_retention(PolicyKind::SlidingWindow, &base(32, 1, 0), &stream).unwrap();
        assert!(!report.records[0].resident);
        assert_eq!(report.records[0].survival_steps, 32);
    }

    #[test]
    fn selection_retains_heavy_token_across_full_span() {
        let config = base(32, 4, 0);
        let span = token_span(&config).unwrap(); // 8 * 15 = 120
        let length = 400usize;
        // Inside the span horizon: retained with certainty.
        let pos = length as u64 - span / 2;
        let stream = SyntheticStream {
            length,
            profile: ScoreProfile::SingleHeavy { pos, weight: 100.0 },
            seed: 0,
        };
        let report = run_retention(PolicyKind::CascadeFull, &config, &stream).unwrap();
        assert!(report.records[0].resident);
        // Far beyond the span: gone even with selection.
        let stream = SyntheticStream {
            length,
            profile: ScoreProfile::SingleHeavy {
                pos: 10,
                weight: 100.0,
            },
            seed: 0,
        };
        let report = run_retention(PolicyKind::CascadeFull, &config, &stream).unwrap();
        assert!(!report.records[0].resident);
    }

    #[test]
    fn no_selection_equals_sink_cache_at_one_cascade() {
        let config = base(64, 1, 4);
        for seed in 0..8 {
            let stream = SyntheticStream {
                length: 700,
                profile: ScoreProfile::SingleHeavy {
                    pos: 300 + seed,
                    weight: 9.0,
                },
                seed,
            };
            let a = run_retention(PolicyKind::CascadeNoSelection, &config, &stream).unwrap();
            let b = run_retention(PolicyKind::StreamingLlmSink, &config, &stream).unwrap();
            assert_eq!(a.records[0].resident, b.records[0].resident);
            assert_eq!(a.records[0].survival_steps, b.records[0].survival_steps);
            assert_eq!(a.empirical_span, b.empirical_span);
        }
    }

    #[test]
    fn stream_shorter_than_capacity_is_rejected() {
        let stream = SyntheticStream {
            length: 10,
            profile: ScoreProfile::UniformRandom,
            seed: 0,
        };
        assert!(matches!(
            run_retention(PolicyKind::CascadeFull, &base(64, 1, 4), &stream),
            Err(WorkloadError::StreamTooShort { .. })
        ));
    }

    #[test]
    fn retention_csv_columns() {
        let stream = SyntheticStream {
            length: 128,
            profile: ScoreProfile::SingleHeavy {
                pos: 100,
                weight: 5.0,
            },
            seed: 7,
        };
        let report = run_retention(PolicyKind::CascadeFull, &base(16, 2, 2), &stream).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "policy,N,capacity,seed,marked_pos,resident,survival_steps,empirical_span"
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("cascade_full,2,16,7,100,"));
    }
}
