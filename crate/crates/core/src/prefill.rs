//! Strided prefill: partition the input into fixed-size chunks, run chunked
//! attention per layer against the resident cache, fold the accumulated EMA
//! score mass back, then admit the chunk's tokens to the cache.
//!
//! Chunk tokens attend to each other causally but only become residents once
//! the whole chunk is processed, so each chunk sees the cache state from
//! before the chunk. The per-chunk fold `μ ← β^m·μ + contribution` composes
//! to the same per-row EMA regardless of stride, which is what makes stride
//! choice a pure latency knob below capacity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{
    chunk_attend, AttentionError, AttentionParams, ChunkAttentionResult, HeadCaches,
};
use crate::cascade::{CascadeConfig, CascadeError, HeadPolicy};
use crate::mat::Mat;
use crate::ring::CacheEntry;
use crate::rope::RotaryTable;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone)]
pub struct PrefillConfig {
    /// Chunk length K; 1 is per-token processing, S is one dense pass.
    pub stride: usize,
    pub layers: usize,
    pub cache_config: CascadeConfig,
    pub attn: AttentionParams,
}

#[derive(Debug, Error)]
pub enum PrefillError {
    #[error("invalid prefill configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Rope(#[from] crate::rope::RopeError),
    #[error(transparent)]
    Cache(#[from] CascadeError),
}

/// Per-layer projection weights. Desk-scale stand-in for a pretrained model:
/// fixed-seed random QKV projections, no MLP, no output projection.
#[derive(Debug, Clone)]
pub struct LayerWeights<T> {
    pub wq: Mat<T>,
    pub wk: Mat<T>,
    pub wv: Mat<T>,
}

#[derive(Debug, Clone)]
pub struct ToyModel<T> {
    layers: Vec<LayerWeights<T>>,
    params: AttentionParams,
}

impl<T: Scalar> ToyModel<T> {
    pub fn random(params: &AttentionParams, layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_model = params.model_dim();
        let d_kv = params.kv_dim();
        let scale = 1.0 / (d_model as f64).sqrt();
        let mut mat = |rows: usize, cols: usize| {
            Mat::from_fn(rows, cols, |_, _| {
                cast::<T>((rng.random::<f64>() * 2.0 - 1.0) * scale)
            })
        };
        let layers = (0..layers)
            .map(|_| LayerWeights {
                wq: mat(d_model, d_model),
                wk: mat(d_model, d_kv),
                wv: mat(d_model, d_kv),
            })
            .collect();
        Self {
            layers,
            params: params.clone(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &LayerWeights<T> {
        &self.layers[l]
    }

    /// Random embeddings for a stream of `len` tokens.
    pub fn random_inputs(&self, len: usize, seed: u64) -> Mat<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(len, self.params.model_dim(), |_, _| {
            cast::<T>(rng.random::<f64>() * 2.0 - 1.0)
        })
    }
}

/// Split a projected m×(h·d) block into h per-head m×d blocks.
pub fn split_heads<T: Scalar>(projected: &Mat<T>, heads: usize, dim: usize) -> Vec<Mat<T>> {
    assert_eq!(projected.cols(), heads * dim);
    (0..heads)
        .map(|h| projected.slice_cols(h * dim, (h + 1) * dim))
        .collect()
}

/// Consecutive half-open ranges of length `stride` covering `[0, len)`;
/// the last range may be shorter.
pub fn stride_chunks(len: usize, stride: usize) -> Vec<(usize, usize)> {
    assert!(len > 0 && stride > 0, "length and stride must be positive");
    let mut out = Vec::with_capacity(len.div_ceil(stride));
    let mut start = 0;
    while start < len {
        let end = (start + stride).min(len);
        out.push((start, end));
        start = end;
    }
    out
}

/// Fold a chunk's score contributions into the caches and admit the chunk's
/// tokens. New tokens enter scored with the mass they accumulated inside the
/// chunk (zero-initialized then folded, all in one step).
pub fn apply_chunk_result<T: Scalar>(
    caches: &mut HeadCaches<T>,
    result: &ChunkAttentionResult<T>,
    k_chunk: &[Mat<T>],
    v_chunk: &[Mat<T>],
    chunk_start: u64,
    beta: f64,
) -> Result<(), PrefillError> {
    let m = k_chunk[0].rows();
    let decay: T = cast(beta.powi(m as i32));
    let policy = caches.policy();
    for (unit_idx, unit) in caches.units_mut().iter_mut().enumerate() {
        let scores = &result.unit_scores[unit_idx];
        let n_res = scores.resident_origins.len();
        unit.fold_chunk_scores(
            decay,
            &scores.resident_origins,
            &scores.contributions[..n_res],
        )?;
        for r in 0..m {
            let (key, value) = match policy {
                HeadPolicy::Homogeneous => {
                    let mut key = Vec::with_capacity(k_chunk.len() * k_chunk[0].cols());
                    let mut value = Vec::with_capacity(v_chunk.len() * v_chunk[0].cols());
                    for g in 0..k_chunk.len() {
                        key.extend_from_slice(k_chunk[g].row(r));
                        value.extend_from_slice(v_chunk[g].row(r));
                    }
                    (key, value)
                }
                HeadPolicy::Independent => (
                    k_chunk[unit_idx].row(r).to_vec(),
                    v_chunk[unit_idx].row(r).to_vec(),
                ),
            };
            let score = scores.contributions[n_res + r];
            unit.add_token(CacheEntry::new(key, value, score, chunk_start + r as u64))?;
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct PrefillResult<T> {
    /// Attention output per layer, S×model_dim.
    pub layer_outputs: Vec<Mat<T>>,
    /// Final cache state per layer.
    pub caches: Vec<HeadCaches<T>>,
}

impl<T: Scalar> PrefillResult<T> {
    /// Output of the last layer.
    pub fn final_output(&self) -> &Mat<T> {
        self.layer_outputs.last().expect("at least one layer")
    }
}

/// Run the full strided prefill over `inputs` (S×model_dim embeddings).
pub fn prefill<T: Scalar>(
    config: &PrefillConfig,
    inputs: &Mat<T>,
    model: &ToyModel<T>,
) -> Result<PrefillResult<T>, PrefillError> {
    if config.stride == 0 {
        return Err(PrefillError::Config("stride must be at least 1"));
    }
    if config.layers == 0 || model.num_layers() != config.layers {
        return Err(PrefillError::Config(
            "model layer count must match configuration",
        ));
    }
    if inputs.rows() == 0 {
        return Err(PrefillError::Config("input stream must not be empty"));
    }
    if inputs.cols() != config.attn.model_dim() {
        return Err(PrefillError::Config(
            "input width must equal num_q_heads * dim",
        ));
    }
    let params = &config.attn;
    let beta = config.cache_config.ema_gamma;
    let seq_len = inputs.rows();

    let mut caches: Vec<HeadCaches<T>> = (0..config.layers)
        .map(|_| HeadCaches::new(config.cache_config.clone(), params))
        .collect::<Result<_, _>>()?;
    let mut layer_outputs: Vec<Mat<T>> = (0..config.layers)
        .map(|_| Mat::zeros(seq_len, params.model_dim()))
        .collect();

    // Largest positional index any token can hold: sink + window + chunk.
    let max_pe = config.cache_config.sink_size + config.cache_config.total_capacity + config.stride;
    let rope = RotaryTable::new(params.dim, max_pe)?;

    for (start, end) in stride_chunks(seq_len, config.stride) {
        for layer in 0..config.layers {
            let x = if layer == 0 {
                inputs.slice_rows(start, end)
            } else {
                layer_outputs[layer - 1].slice_rows(start, end)
            };
            let q = split_heads(
                &x.matmul(&model.layer(layer).wq),
                params.num_q_heads,
                params.dim,
            );
            let k = split_heads(
                &x.matmul(&model.layer(layer).wk),
                params.num_kv_heads,
                params.dim,
            );
            let v = split_heads(
                &x.matmul(&model.layer(layer).wv),
                params.num_kv_heads,
                params.dim,
            );
            let result = chunk_attend(
                params,
                beta,
                &caches[layer],
                start as u64,
                &q,
                &k,
                &v,
                &rope,
            )?;
            apply_chunk_result(&mut caches[layer], &result, &k, &v, start as u64, beta)?;
            for (r, head_outs) in (start..end).enumerate() {
                let row = layer_outputs[layer].row_mut(head_outs);
                for (h, out) in result.outputs.iter().enumerate() {
                    row[h * params.dim..(h + 1) * params.dim].copy_from_slice(out.row(r));
                }
            }
        }
    }
    Ok(PrefillResult {
        layer_outputs,
        caches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_chunks_cover_range() {
        assert_eq!(stride_chunks(10, 4), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(stride_chunks(4, 8), vec![(0, 4)]);
        let singles = stride_chunks(5, 1);
        assert_eq!(singles.len(), 5);
        assert_eq!(singles[4], (4, 5));
    }

    #[test]
    fn split_heads_slices_columns() {
        let m = Mat::from_fn(2, 6, |r, c| (r * 6 + c) as f64);
        let heads = split_heads(&m, 3, 2);
        assert_eq!(heads.len(), 3);
        assert_eq!(heads[1].row(0), &[2.0, 3.0]);
        assert_eq!(heads[2].row(1), &[10.0, 11.0]);
    }
}
