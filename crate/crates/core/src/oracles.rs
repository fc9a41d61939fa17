//! Independent reference models used by the verification suite and the
//! property tests. Everything in here is written the slow, obvious way —
//! shift-on-evict arrays, dense matrices, per-row loops — precisely so it
//! shares no code path with the production implementations it checks.

use crate::cascade::{accepts_on, CascadeConfig};
use crate::mat::Mat;
use crate::rope::apply_rotary_by_cache_index;
use crate::scalar::{cast, Scalar};
use crate::trace::{TraceEvent, TraceEventKind};

// ── Naive ring model ────────────────────────────────────────────────────────

/// Shift-array stand-in for `RingStore`: eviction removes index 0 and slides
/// everything down. O(n) per op, trivially correct.
#[derive(Debug, Clone, Default)]
pub struct NaiveRing {
    pub capacity: usize,
    pub items: Vec<u64>,
}

impl NaiveRing {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
        }
    }

    pub fn push_overwrite(&mut self, origin: u64) -> Option<u64> {
        let evicted = if self.items.len() == self.capacity {
            Some(self.items.remove(0))
        } else {
            None
        };
        self.items.push(origin);
        evicted
    }

    pub fn evict_newest(&mut self) -> Option<u64> {
        self.items.pop()
    }

    pub fn evict_oldest(&mut self) -> Option<u64> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items.remove(0))
        }
    }
}

// ── Reference sink cache ────────────────────────────────────────────────────

/// Streaming sink cache: keep the first `sink_size` tokens forever, slide a
/// FIFO window of `window` over the rest. Emits the same event encoding as
/// the cascading cache so the two streams can be compared byte for byte.
#[derive(Debug, Clone)]
pub struct ReferenceSinkCache {
    sink_size: usize,
    window: usize,
    sink: Vec<u64>,
    recent: Vec<u64>,
    step: u64,
}

impl ReferenceSinkCache {
    pub fn new(sink_size: usize, window: usize) -> Self {
        Self {
            sink_size,
            window,
            sink: Vec::new(),
            recent: Vec::new(),
            step: 0,
        }
    }

    pub fn add_token(&mut self, origin: u64) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        if self.sink.len() < self.sink_size {
            self.sink.push(origin);
            events.push(TraceEvent {
                step: self.step,
                kind: TraceEventKind::SinkAdd,
                origin_pos: origin,
                sub_cache: 0,
            });
            return events;
        }
        self.recent.push(origin);
        events.push(TraceEvent {
            step: self.step,
            kind: TraceEventKind::Accept,
            origin_pos: origin,
            sub_cache: 1,
        });
        if self.recent.len() > self.window {
            let evicted = self.recent.remove(0);
            events.push(TraceEvent {
                step: self.step,
                kind: TraceEventKind::CascadeEvict,
                origin_pos: evicted,
                sub_cache: 1,
            });
            events.push(TraceEvent {
                step: self.step,
                kind: TraceEventKind::FinalDiscard,
                origin_pos: evicted,
                sub_cache: 1,
            });
        }
        self.step += 1;
        events
    }

    pub fn residents(&self) -> Vec<u64> {
        let mut out = self.sink.clone();
        out.extend(&self.recent);
        out
    }
}

// ── Naive cascading simulator ───────────────────────────────────────────────

/// Brute-force replica of the cascading walk built on shift arrays, carrying
/// (origin, score) pairs. Decides exactly like the production cache but
/// shares none of its bookkeeping.
#[derive(Debug, Clone)]
pub struct NaiveCascade {
    pub sink_size: usize,
    pub selection: bool,
    pub sink: Vec<u64>,
    pub subs: Vec<Vec<(u64, f64)>>,
    pub sub_capacity: usize,
    pub step: u64,
}

impl NaiveCascade {
    pub fn new(config: &CascadeConfig) -> Self {
        Self {
            sink_size: config.sink_size,
            selection: config.selection_enabled,
            sink: Vec::new(),
            subs: vec![Vec::new(); config.num_cascades],
            sub_capacity: config.sub_capacity(),
            step: 0,
        }
    }

    pub fn add_token(&mut self, origin: u64, score: f64) {
        if self.sink.len() < self.sink_size {
            self.sink.push(origin);
            return;
        }
        let mut carried = Some((origin, score));
        for idx in 1..=self.subs.len() {
            let (org, sc) = carried.take().expect("carrying");
            let sub = &mut self.subs[idx - 1];
            if accepts_on(idx, self.step) {
                sub.push((org, sc));
                if sub.len() > self.sub_capacity {
                    carried = Some(sub.remove(0));
                } else {
                    break;
                }
            } else if sub.len() < self.sub_capacity {
                sub.push((org, sc));
                break;
            } else {
                let newest = *sub.last().expect("full sub-cache");
                if self.selection && sc > newest.1 {
                    sub.pop();
                    sub.push((org, sc));
                }
                break;
            }
        }
        self.step += 1;
    }

    /// Residents in ascending stream order.
    pub fn residents(&self) -> Vec<u64> {
        let mut out = self.sink.clone();
        for sub in self.subs.iter().rev() {
            out.extend(sub.iter().map(|(o, _)| *o));
        }
        out
    }
}

// ── Dense forward oracle ────────────────────────────────────────────────────

/// Dense causal attention for one head with rotary encoding applied by
/// absolute position, written with its own softmax loop.
pub fn dense_causal_attention<T: Scalar>(q: &Mat<T>, k: &Mat<T>, v: &Mat<T>, scale: f64) -> Mat<T> {
    let s = q.rows();
    let d = q.cols();
    let positions: Vec<usize> = (0..s).collect();
    let q_rot = apply_rotary_by_cache_index(q, &positions).expect("even dimension");
    let k_rot = apply_rotary_by_cache_index(k, &positions).expect("even dimension");
    let mut out = Mat::zeros(s, d);
    for i in 0..s {
        let mut logits = vec![0.0f64; i + 1];
        for (j, logit) in logits.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for c in 0..d {
                acc +=
                    crate::scalar::widen(q_rot.get(i, c)) * crate::scalar::widen(k_rot.get(j, c));
            }
            *logit = acc * scale;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let row = out.row_mut(i);
        for (j, e) in exps.iter().enumerate() {
            let p = e / total;
            for c in 0..d {
                row[c] += cast::<T>(p) * v.get(j, c);
            }
        }
    }
    out
}

/// Multi-layer, multi-head dense forward pass over the same toy projections
/// the prefill driver uses. One rectangular pass per layer, no cache, no
/// chunking: the ground truth for prefill outputs below capacity.
pub fn dense_forward<T: Scalar>(
    inputs: &Mat<T>,
    model: &crate::prefill::ToyModel<T>,
    params: &crate::attention::AttentionParams,
    layers: usize,
) -> Vec<Mat<T>> {
    let mut outputs = Vec::with_capacity(layers);
    let mut x = inputs.clone();
    for l in 0..layers {
        let w = model.layer(l);
        let q = crate::prefill::split_heads(&x.matmul(&w.wq), params.num_q_heads, params.dim);
        let k = crate::prefill::split_heads(&x.matmul(&w.wk), params.num_kv_heads, params.dim);
        let v = crate::prefill::split_heads(&x.matmul(&w.wv), params.num_kv_heads, params.dim);
        let group = params.group_size();
        let heads: Vec<Mat<T>> = (0..params.num_q_heads)
            .map(|h| dense_causal_attention(&q[h], &k[h / group], &v[h / group], params.scale))
            .collect();
        let refs: Vec<&Mat<T>> = heads.iter().collect();
        let out = Mat::hcat(&refs);
        outputs.push(out.clone());
        x = out;
    }
    outputs
}

// ── Sequential EMA oracle ───────────────────────────────────────────────────

/// Score accumulation the slow way: process the chunk one query row at a
/// time, each row a full softmax over the keys visible to it, folding
/// `μ ← β·μ + (1-β)·p` after every row. The chunked path must reproduce this.
///
/// `resident_keys` are pre-rotated; `chunk_keys` rows are appended at the
/// subsequent positional indices. Returns one value per key
/// (residents then chunk) for a single head.
pub fn sequential_ema_scores<T: Scalar>(
    queries: &Mat<T>,
    resident_keys: &Mat<T>,
    chunk_keys: &Mat<T>,
    scale: f64,
    beta: f64,
) -> Vec<f64> {
    let n_res = resident_keys.rows();
    let m = queries.rows();
    let d = queries.cols();
    debug_assert_eq!(resident_keys.cols(), d);
    let total = n_res + m;
    let mut mu = vec![0.0f64; total];
    let key_row = |j: usize| -> Vec<f64> {
        if j < n_res {
            resident_keys
                .row(j)
                .iter()
                .map(|v| crate::scalar::widen(*v))
                .collect()
        } else {
            chunk_keys
                .row(j - n_res)
                .iter()
                .map(|v| crate::scalar::widen(*v))
                .collect()
        }
    };
    for i in 0..m {
        let visible = n_res + i + 1;
        let q: Vec<f64> = queries
            .row(i)
            .iter()
            .map(|v| crate::scalar::widen(*v))
            .collect();
        let mut logits = vec![0.0f64; visible];
        for (j, logit) in logits.iter_mut().enumerate() {
            let k = key_row(j);
            *logit = q.iter().zip(k.iter()).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let norm: f64 = exps.iter().sum();
        for (j, mu_j) in mu.iter_mut().enumerate() {
            let p = if j < visible { exps[j] / norm } else { 0.0 };
            *mu_j = beta * *mu_j + (1.0 - beta) * p;
        }
    }
    mu
}

/// Final EMA score of every token in a stream given the per-row attention
/// probabilities `probs[i]` (causal, length `i+1`): token j accumulates
/// `Σ_{i≥j} β^(S-1-i)·(1-β)·probs[i][j]`. A token receives no decay for
/// steps before it existed, matching the fold the prefill driver applies.
pub fn sequential_stream_scores(probs: &[Vec<f64>], beta: f64) -> Vec<f64> {
    let s = probs.len();
    let mut mu = vec![0.0f64; s];
    for (j, mu_j) in mu.iter_mut().enumerate() {
        for (i, row) in probs.iter().enumerate().skip(j) {
            *mu_j += beta.powi((s - 1 - i) as i32) * (1.0 - beta) * row[j];
        }
    }
    mu
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_ring_fifo_order() {
        let mut ring = NaiveRing::new(2);
        assert_eq!(ring.push_overwrite(0), None);
        assert_eq!(ring.push_overwrite(1), None);
        assert_eq!(ring.push_overwrite(2), Some(0));
        assert_eq!(ring.items, vec![1, 2]);
    }

    #[test]
    fn reference_sink_cache_keeps_sinks_and_window() {
        let mut cache = ReferenceSinkCache::new(2, 3);
        for p in 0..10 {
            cache.add_token(p);
        }
        assert_eq!(cache.residents(), vec![0, 1, 7, 8, 9]);
    }
}
