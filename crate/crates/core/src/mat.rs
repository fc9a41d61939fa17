//! Minimal dense row-major matrix. Just enough linear algebra for desk-scale
//! attention; no broadcasting, no views.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape does not match data length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// `self (m×k) · other (k×n) -> m×n`.
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let o_row = out.row_mut(r);
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = other.row(k);
                for (c, &b) in b_row.iter().enumerate() {
                    o_row[c] += a * b;
                }
            }
        }
        out
    }

    /// `self (m×d) · otherᵀ (n×d) -> m×n`, the query-key product.
    pub fn matmul_bt(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.cols, "shared dimension must agree");
        let mut out = Mat::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let o_row = out.row_mut(r);
            for (c, o) in o_row.iter_mut().enumerate() {
                let b_row = other.row(c);
                let mut acc = T::zero();
                for i in 0..self.cols {
                    acc += a_row[i] * b_row[i];
                }
                *o = acc;
            }
        }
        out
    }

    /// Copy rows `start..end` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Mat<T> {
        assert!(start <= end && end <= self.rows);
        Mat::from_vec(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        )
    }

    /// Copy columns `start..end` into a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Mat<T> {
        assert!(start <= end && end <= self.cols);
        let mut out = Mat::zeros(self.rows, end - start);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    /// Horizontally concatenate matrices with equal row counts.
    pub fn hcat(parts: &[&Mat<T>]) -> Mat<T> {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for p in parts {
                assert_eq!(p.rows, rows);
                out.row_mut(r)[at..at + p.cols].copy_from_slice(p.row(r));
                at += p.cols;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Largest relative element difference between two matrices, with a unit
/// floor so near-zero entries compare absolutely.
pub fn max_rel_diff<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> f64 {
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.cols, b.cols);
    let mut worst = 0.0f64;
    for (x, y) in a.data.iter().zip(b.data.iter()) {
        let x = crate::scalar::widen(*x);
        let y = crate::scalar::widen(*y);
        let denom = x.abs().max(y.abs()).max(1.0);
        worst = worst.max((x - y).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Mat::from_vec(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Mat::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let a = Mat::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        let b = Mat::from_fn(2, 4, |r, c| (r + c) as f64 * 0.5);
        let bt = Mat::from_fn(4, 2, |r, c| b.get(c, r));
        assert_eq!(a.matmul_bt(&b), a.matmul(&bt));
    }

    #[test]
    fn hcat_shapes() {
        let a = Mat::<f32>::zeros(2, 3);
        let b = Mat::<f32>::zeros(2, 1);
        let c = Mat::hcat(&[&a, &b]);
        assert_eq!((c.rows(), c.cols()), (2, 4));
    }
}
