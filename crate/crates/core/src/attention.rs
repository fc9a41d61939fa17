//! Desk-scale exact attention.
//!
//! [`reference_attention`] is the dense ground truth. [`chunk_attend`]
//! computes one rectangular prefill slice: every query row attends to the
//! rotary-encoded cache residents plus the causally visible part of its own
//! chunk, and the per-key softmax mass is accumulated into an EMA
//! contribution with one timestep per query row. Softmax is exact (full
//! normalizer), so chunked and per-token processing agree to rounding.

use thiserror::Error;

use crate::cascade::{CascadeCache, CascadeConfig, CascadeError, HeadPolicy, HeadReduction};
use crate::mat::Mat;
use crate::rope::{RopeError, RotaryTable};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone)]
pub struct AttentionParams {
    /// Per-head dimension d.
    pub dim: usize,
    pub num_q_heads: usize,
    pub num_kv_heads: usize,
    /// Logit scale, 1/√d unless overridden.
    pub scale: f64,
}

impl AttentionParams {
    pub fn new(
        dim: usize,
        num_q_heads: usize,
        num_kv_heads: usize,
    ) -> Result<Self, AttentionError> {
        if dim == 0 || num_q_heads == 0 || num_kv_heads == 0 {
            return Err(AttentionError::Config(
                "dimensions and head counts must be positive",
            ));
        }
        if !num_q_heads.is_multiple_of(num_kv_heads) {
            return Err(AttentionError::Config(
                "query heads must divide evenly into kv heads",
            ));
        }
        Ok(Self {
            dim,
            num_q_heads,
            num_kv_heads,
            scale: 1.0 / (dim as f64).sqrt(),
        })
    }

    pub fn group_size(&self) -> usize {
        self.num_q_heads / self.num_kv_heads
    }

    /// Model width consumed by embeddings: query heads × head dim.
    pub fn model_dim(&self) -> usize {
        self.num_q_heads * self.dim
    }

    pub fn kv_dim(&self) -> usize {
        self.num_kv_heads * self.dim
    }
}

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error("invalid attention configuration: {0}")]
    Config(&'static str),
    #[error("beta must lie strictly inside (0, 1), got {0}")]
    BetaOutOfRange(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite values in attention inputs")]
    NonFinite,
    #[error("query chunk starts at {got} but the cache expects origin {expected}")]
    QueryOrdering { expected: u64, got: u64 },
    #[error(transparent)]
    Rope(#[from] RopeError),
    #[error(transparent)]
    Cache(#[from] CascadeError),
}

/// Numerically stable softmax over `row`, in place.
fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Dense softmax(QKᵀ/√d)·V with an optional causal mask. The ground-truth
/// oracle every chunked path is checked against.
pub fn reference_attention<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    causal: bool,
) -> Result<Mat<T>, AttentionError> {
    let d = q.cols();
    if k.cols() != d || v.cols() != d {
        return Err(AttentionError::ShapeMismatch(format!(
            "q/k/v widths differ: {} / {} / {}",
            d,
            k.cols(),
            v.cols()
        )));
    }
    if k.rows() != v.rows() {
        return Err(AttentionError::ShapeMismatch(
            "k and v row counts differ".into(),
        ));
    }
    if causal && q.rows() != k.rows() {
        return Err(AttentionError::ShapeMismatch(
            "causal mask needs square attention".into(),
        ));
    }
    if !(q.is_finite() && k.is_finite() && v.is_finite()) {
        return Err(AttentionError::NonFinite);
    }
    let scale: T = cast(1.0 / (d as f64).sqrt());
    let mut scores = q.matmul_bt(k);
    let mut out = Mat::zeros(q.rows(), d);
    for i in 0..q.rows() {
        let visible = if causal { i + 1 } else { k.rows() };
        let row = &mut scores.row_mut(i)[..visible];
        for s in row.iter_mut() {
            *s *= scale;
        }
        softmax_in_place(row);
        let probs = &scores.row(i)[..visible];
        let out_row = out.row_mut(i);
        for (j, &p) in probs.iter().enumerate() {
            let v_row = v.row(j);
            for c in 0..d {
                out_row[c] += p * v_row[c];
            }
        }
    }
    Ok(out)
}

fn reduce_slice<T: Scalar>(values: &[T], reduction: HeadReduction) -> T {
    match reduction {
        HeadReduction::Mean => {
            let sum: T = values.iter().copied().sum();
            sum / cast(values.len() as f64)
        }
        HeadReduction::Max => values.iter().copied().fold(T::neg_infinity(), T::max),
        HeadReduction::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
            let n = sorted.len();
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                (sorted[n / 2 - 1] + sorted[n / 2]) / cast(2.0)
            }
        }
    }
}

/// Collapse per-query-head score series to per-decision-unit series:
/// one series for the homogeneous policy, one per kv head for the
/// independent policy, reduced element-wise.
pub fn reduce_heads<T: Scalar>(
    scores: &[Vec<T>],
    policy: HeadPolicy,
    reduction: HeadReduction,
    num_kv_heads: usize,
) -> Result<Vec<Vec<T>>, AttentionError> {
    if scores.is_empty() {
        return Err(AttentionError::Config("need at least one head series"));
    }
    let keys = scores[0].len();
    if scores.iter().any(|s| s.len() != keys) {
        return Err(AttentionError::ShapeMismatch(
            "head series lengths differ".into(),
        ));
    }
    let groups: Vec<&[Vec<T>]> = match policy {
        HeadPolicy::Homogeneous => vec![scores],
        HeadPolicy::Independent => {
            if !scores.len().is_multiple_of(num_kv_heads) {
                return Err(AttentionError::Config(
                    "query heads must divide evenly into kv heads",
                ));
            }
            let group = scores.len() / num_kv_heads;
            scores.chunks(group).collect()
        }
    };
    let mut scratch = Vec::with_capacity(scores.len());
    let out = groups
        .iter()
        .map(|heads| {
            (0..keys)
                .map(|j| {
                    scratch.clear();
                    scratch.extend(heads.iter().map(|h| h[j]));
                    reduce_slice(&scratch, reduction)
                })
                .collect()
        })
        .collect();
    Ok(out)
}

/// Per-stream caches for one layer, laid out by head policy: the homogeneous
/// policy shares one cache whose entries stack all kv heads, the independent
/// policy gives every kv head its own cache and its own eviction decisions.
#[derive(Debug, Clone)]
pub struct HeadCaches<T> {
    units: Vec<CascadeCache<T>>,
    policy: HeadPolicy,
}

impl<T: Scalar> HeadCaches<T> {
    pub fn new(config: CascadeConfig, params: &AttentionParams) -> Result<Self, CascadeError> {
        let policy = config.head_policy;
        let units = match policy {
            HeadPolicy::Homogeneous => vec![CascadeCache::new(config, params.kv_dim())?],
            HeadPolicy::Independent => (0..params.num_kv_heads)
                .map(|_| CascadeCache::new(config.clone(), params.dim))
                .collect::<Result<_, _>>()?,
        };
        Ok(Self { units, policy })
    }

    pub fn policy(&self) -> HeadPolicy {
        self.policy
    }

    pub fn units(&self) -> &[CascadeCache<T>] {
        &self.units
    }

    pub fn units_mut(&mut self) -> &mut [CascadeCache<T>] {
        &mut self.units
    }

    /// Decision unit feeding query head `h`.
    pub fn unit_of_head(&self, h: usize, params: &AttentionParams) -> usize {
        match self.policy {
            HeadPolicy::Homogeneous => 0,
            HeadPolicy::Independent => h / params.group_size(),
        }
    }

    pub fn expected_next_origin(&self) -> u64 {
        let next = self.units[0].expected_next_origin();
        debug_assert!(self.units.iter().all(|u| u.expected_next_origin() == next));
        next
    }
}

/// Score mass gathered for one decision unit across a chunk: residents first
/// (in cache order), then the chunk's own tokens. Entry `j` is
/// `Σ_i β^(m-1-i)·(1-β)·P[i,j]` with causally masked positions contributing
/// zero; the caller folds residents as `μ ← β^m·μ + contribution` and seeds
/// new tokens with theirs.
#[derive(Debug, Clone)]
pub struct UnitScores<T> {
    pub resident_origins: Vec<u64>,
    pub contributions: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ChunkAttentionResult<T> {
    /// One m×d output block per query head.
    pub outputs: Vec<Mat<T>>,
    /// One score series per decision unit.
    pub unit_scores: Vec<UnitScores<T>>,
}

struct UnitCtx<T> {
    origins: Vec<u64>,
    n_res: usize,
    /// Rotated resident keys per kv head of this unit, (n_res+m)×d with the
    /// chunk keys appended at pe indices n_res, n_res+1, ….
    keys: Vec<Mat<T>>,
    values: Vec<Mat<T>>,
    kv_heads: Vec<usize>,
}

/// Attention for one prefill chunk of `m` query rows against
/// (cache ∪ chunk) keys, returning outputs and per-key EMA contributions.
#[allow(clippy::too_many_arguments)]
pub fn chunk_attend<T: Scalar>(
    params: &AttentionParams,
    beta: f64,
    caches: &HeadCaches<T>,
    chunk_start: u64,
    q_heads: &[Mat<T>],
    k_chunk: &[Mat<T>],
    v_chunk: &[Mat<T>],
    rope: &RotaryTable<T>,
) -> Result<ChunkAttentionResult<T>, AttentionError> {
    if !(0.0 < beta && beta < 1.0) {
        return Err(AttentionError::BetaOutOfRange(beta));
    }
    if q_heads.len() != params.num_q_heads
        || k_chunk.len() != params.num_kv_heads
        || v_chunk.len() != params.num_kv_heads
    {
        return Err(AttentionError::ShapeMismatch("head count mismatch".into()));
    }
    let m = q_heads[0].rows();
    if m == 0 {
        return Err(AttentionError::Config(
            "chunk must contain at least one query",
        ));
    }
    for mat in q_heads.iter().chain(k_chunk).chain(v_chunk) {
        if mat.rows() != m || mat.cols() != params.dim {
            return Err(AttentionError::ShapeMismatch(format!(
                "expected {}×{} blocks, got {}×{}",
                m,
                params.dim,
                mat.rows(),
                mat.cols()
            )));
        }
    }
    let expected = caches.expected_next_origin();
    if chunk_start != expected {
        return Err(AttentionError::QueryOrdering {
            expected,
            got: chunk_start,
        });
    }

    let d = params.dim;
    let group_size = params.group_size();
    let scale: T = cast(params.scale);
    let beta_t: T = cast(beta);
    let one_minus_beta: T = cast(1.0 - beta);

    // Assemble rotated key and raw value matrices per unit.
    let mut units = Vec::with_capacity(caches.units().len());
    for (u, cache) in caches.units().iter().enumerate() {
        let origins: Vec<u64> = cache.resident_origins();
        let n_res = origins.len();
        let kv_heads: Vec<usize> = match caches.policy() {
            HeadPolicy::Homogeneous => (0..params.num_kv_heads).collect(),
            HeadPolicy::Independent => vec![u],
        };
        let mut keys = Vec::with_capacity(kv_heads.len());
        let mut values = Vec::with_capacity(kv_heads.len());
        for (slot, &g) in kv_heads.iter().enumerate() {
            let offset = match caches.policy() {
                HeadPolicy::Homogeneous => slot * d,
                HeadPolicy::Independent => 0,
            };
            let mut key_mat = Mat::zeros(n_res + m, d);
            let mut val_mat = Mat::zeros(n_res + m, d);
            for (pe, entry) in cache.iter_residents().enumerate() {
                rope.rotate_into(&entry.key[offset..offset + d], pe, key_mat.row_mut(pe))?;
                val_mat
                    .row_mut(pe)
                    .copy_from_slice(&entry.value[offset..offset + d]);
            }
            for r in 0..m {
                rope.rotate_into(k_chunk[g].row(r), n_res + r, key_mat.row_mut(n_res + r))?;
                val_mat
                    .row_mut(n_res + r)
                    .copy_from_slice(v_chunk[g].row(r));
            }
            keys.push(key_mat);
            values.push(val_mat);
        }
        units.push(UnitCtx {
            origins,
            n_res,
            keys,
            values,
            kv_heads,
        });
    }

    let mut outputs: Vec<Mat<T>> = (0..params.num_q_heads).map(|_| Mat::zeros(m, d)).collect();
    let mut contributions: Vec<Vec<T>> =
        units.iter().map(|u| vec![T::zero(); u.n_res + m]).collect();

    // Scratch: per-head probability row and rotated query.
    let max_keys = units.iter().map(|u| u.n_res + m).max().unwrap_or(0);
    let mut head_probs: Vec<Vec<T>> = vec![vec![T::zero(); max_keys]; params.num_q_heads];
    let mut q_rot = vec![T::zero(); d];
    let mut head_vals: Vec<T> = Vec::with_capacity(params.num_q_heads);

    for i in 0..m {
        // Per-head probabilities and outputs for query row i.
        for h in 0..params.num_q_heads {
            let unit_idx = caches.unit_of_head(h, params);
            let unit = &units[unit_idx];
            let visible = unit.n_res + i + 1;
            let g = h / group_size;
            let slot = unit
                .kv_heads
                .iter()
                .position(|&kv| kv == g)
                .expect("head maps to unit");
            let key_mat = &unit.keys[slot];
            let val_mat = &unit.values[slot];
            rope.rotate_into(q_heads[h].row(i), unit.n_res + i, &mut q_rot)?;
            let probs = &mut head_probs[h];
            for j in 0..visible {
                let k_row = key_mat.row(j);
                let mut acc = T::zero();
                for c in 0..d {
                    acc += q_rot[c] * k_row[c];
                }
                probs[j] = acc * scale;
            }
            softmax_in_place(&mut probs[..visible]);
            let out_row = outputs[h].row_mut(i);
            for j in 0..visible {
                let p = probs[j];
                let v_row = val_mat.row(j);
                for c in 0..d {
                    out_row[c] += p * v_row[c];
                }
            }
        }
        // Head-reduced EMA accumulation: row i is one EMA timestep with
        // coefficient β^(m-1-i)·(1-β).
        let coeff = beta_t.powi((m - 1 - i) as i32) * one_minus_beta;
        for (unit_idx, unit) in units.iter().enumerate() {
            let visible = unit.n_res + i + 1;
            let heads: Vec<usize> = match caches.policy() {
                HeadPolicy::Homogeneous => (0..params.num_q_heads).collect(),
                HeadPolicy::Independent => {
                    (unit_idx * group_size..(unit_idx + 1) * group_size).collect()
                }
            };
            let reduction = caches.units()[unit_idx].config().head_reduction;
            let contrib = &mut contributions[unit_idx];
            for j in 0..visible {
                head_vals.clear();
                head_vals.extend(heads.iter().map(|&h| head_probs[h][j]));
                contrib[j] += coeff * reduce_slice(&head_vals, reduction);
            }
        }
    }

    let unit_scores = units
        .into_iter()
        .zip(contributions)
        .map(|(u, contributions)| UnitScores {
            resident_origins: u.origins,
            contributions,
        })
        .collect();
    Ok(ChunkAttentionResult {
        outputs,
        unit_scores,
    })
}
