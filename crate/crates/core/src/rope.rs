//! Rotary positional encoding applied by cache index.
//!
//! Cached keys are stored unrotated. Whenever the resident set changes, every
//! token's positional index is recomputed from its rank inside the cache, so
//! rotation happens on read with whatever index the token holds right now.
//! The angle schedule is the standard one: pair dimension `j` with `j + d/2`
//! and rotate by `pos · base^(-2j/d)`, base 10000.

use thiserror::Error;

use crate::mat::Mat;
use crate::scalar::{cast, Scalar};

pub const ROTARY_BASE: f64 = 10_000.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RopeError {
    #[error("rotary encoding needs an even dimension, got {0}")]
    OddDimension(usize),
    #[error("{got} positional indices for {expected} rows")]
    IndexCountMismatch { expected: usize, got: usize },
    #[error("positional index {0} exceeds the precomputed table")]
    IndexOutOfTable(usize),
}

/// Rotate each row of `vectors` by the angle schedule of its positional
/// index. Index 0 is the identity; every rotation preserves the row norm.
pub fn apply_rotary_by_cache_index<T: Scalar>(
    vectors: &Mat<T>,
    pe_indices: &[usize],
) -> Result<Mat<T>, RopeError> {
    let dim = vectors.cols();
    if !dim.is_multiple_of(2) {
        return Err(RopeError::OddDimension(dim));
    }
    if pe_indices.len() != vectors.rows() {
        return Err(RopeError::IndexCountMismatch {
            expected: vectors.rows(),
            got: pe_indices.len(),
        });
    }
    let half = dim / 2;
    let mut out = Mat::zeros(vectors.rows(), dim);
    for (r, &pos) in pe_indices.iter().enumerate() {
        let x = vectors.row(r);
        let y = out.row_mut(r);
        for j in 0..half {
            let freq = ROTARY_BASE.powf(-2.0 * j as f64 / dim as f64);
            let (sin, cos) = (pos as f64 * freq).sin_cos();
            let (sin, cos): (T, T) = (cast(sin), cast(cos));
            let a = x[j];
            let b = x[j + half];
            y[j] = a * cos - b * sin;
            y[j + half] = a * sin + b * cos;
        }
    }
    Ok(out)
}

/// Precomputed sin/cos table over positions `0..max_pos`. The chunked
/// attention path re-rotates the whole resident set every chunk, so table
/// lookup instead of `sin_cos` calls is the difference between usable and
/// unusable stride-1 latency.
#[derive(Debug, Clone)]
pub struct RotaryTable<T> {
    dim: usize,
    max_pos: usize,
    /// Row `pos` holds `half` cos values followed by `half` sin values.
    rows: Vec<T>,
}

impl<T: Scalar> RotaryTable<T> {
    pub fn new(dim: usize, max_pos: usize) -> Result<Self, RopeError> {
        if !dim.is_multiple_of(2) {
            return Err(RopeError::OddDimension(dim));
        }
        let half = dim / 2;
        let mut rows = Vec::with_capacity(max_pos * dim);
        for pos in 0..max_pos {
            for j in 0..half {
                let freq = ROTARY_BASE.powf(-2.0 * j as f64 / dim as f64);
                rows.push(cast((pos as f64 * freq).cos()));
            }
            for j in 0..half {
                let freq = ROTARY_BASE.powf(-2.0 * j as f64 / dim as f64);
                rows.push(cast((pos as f64 * freq).sin()));
            }
        }
        Ok(Self { dim, max_pos, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_pos(&self) -> usize {
        self.max_pos
    }

    /// Rotate `src` (length `dim`) by position `pos` into `dst`.
    pub fn rotate_into(&self, src: &[T], pos: usize, dst: &mut [T]) -> Result<(), RopeError> {
        if pos >= self.max_pos {
            return Err(RopeError::IndexOutOfTable(pos));
        }
        debug_assert_eq!(src.len(), self.dim);
        debug_assert_eq!(dst.len(), self.dim);
        let half = self.dim / 2;
        let row = &self.rows[pos * self.dim..(pos + 1) * self.dim];
        let (cos, sin) = row.split_at(half);
        for j in 0..half {
            let a = src[j];
            let b = src[j + half];
            dst[j] = a * cos[j] - b * sin[j];
            dst[j + half] = a * sin[j] + b * cos[j];
        }
        Ok(())
    }
}
