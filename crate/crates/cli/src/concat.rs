//! Concatenation-based cache baseline.
//!
//! Mirrors the tensor-concatenation pattern older sink-cache implementations
//! use: every add materializes a fresh `(len+1)`-row buffer, and eviction
//! slices the head row off into yet another fresh buffer. Deliberately kept
//! allocation-per-op so the latency comparison against the ring is
//! apples-to-apples with that style of implementation.

/// Sink + sliding window cache backed by copy-on-add buffers.
pub struct ConcatKvCache {
    dim: usize,
    sink_size: usize,
    capacity: usize,
    sink_keys: Vec<f32>,
    sink_values: Vec<f32>,
    keys: Vec<f32>,
    values: Vec<f32>,
    len: usize,
}

impl ConcatKvCache {
    pub fn new(capacity: usize, sink_size: usize, dim: usize) -> Self {
        Self {
            dim,
            sink_size,
            capacity,
            sink_keys: Vec::new(),
            sink_values: Vec::new(),
            keys: Vec::new(),
            values: Vec::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len + self.sink_keys.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn concat(buf: &[f32], row: &[f32]) -> Vec<f32> {
        let mut out = Vec::with_capacity(buf.len() + row.len());
        out.extend_from_slice(buf);
        out.extend_from_slice(row);
        out
    }

    pub fn push(&mut self, key: &[f32], value: &[f32]) {
        debug_assert_eq!(key.len(), self.dim);
        if self.sink_keys.len() < self.sink_size * self.dim {
            self.sink_keys = Self::concat(&self.sink_keys, key);
            self.sink_values = Self::concat(&self.sink_values, value);
            return;
        }
        self.keys = Self::concat(&self.keys, key);
        self.values = Self::concat(&self.values, value);
        self.len += 1;
        if self.len > self.capacity {
            // Drop the oldest row: another full copy, as slicing a tensor
            // concatenation does.
            self.keys = self.keys[self.dim..].to_vec();
            self.values = self.values[self.dim..].to_vec();
            self.len -= 1;
        }
    }

    pub fn window_origin_checksum(&self) -> f32 {
        self.keys.iter().step_by(self.dim.max(1)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_slides_after_capacity() {
        let mut cache = ConcatKvCache::new(3, 1, 2);
        for i in 0..6 {
            cache.push(&[i as f32, 0.0], &[0.0, 0.0]);
        }
        // Sink keeps token 0; window keeps 3,4,5.
        assert_eq!(cache.len(), 4);
        assert_eq!(cache.window_origin_checksum(), 3.0 + 4.0 + 5.0);
    }
}
