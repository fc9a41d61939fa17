//! Fixed-capacity circular buffer of cached tokens.
//!
//! Every sub-cache is backed by one `RingStore`. Keys and values for all
//! slots live in two contiguous blocks so attention assembly can walk dense
//! memory; a [`CacheEntry`] is the owned, per-token view used to move tokens
//! between stores.
//!
//! The slot pointer `xi` always names the next insertion slot. While the
//! store fills, occupied slots are exactly `[0, count)` and `xi == count`;
//! once full, `xi` is the oldest slot and an insert overwrites it in place,
//! advancing `xi = (xi + 1) mod capacity`. No reallocation ever happens
//! after construction.

use thiserror::Error;

use crate::scalar::Scalar;

/// One cached token: key and value projections, the EMA attention score it
/// has accumulated, and its absolute position in the input stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry<T> {
    pub key: Vec<T>,
    pub value: Vec<T>,
    pub score: T,
    pub origin_pos: u64,
}

impl<T: Scalar> CacheEntry<T> {
    pub fn new(key: Vec<T>, value: Vec<T>, score: T, origin_pos: u64) -> Self {
        Self {
            key,
            value,
            score,
            origin_pos,
        }
    }

    /// Vector-free entry for policy-only simulations where eviction decisions
    /// depend on scores alone and carrying key/value payloads would be waste.
    pub fn scalar(origin_pos: u64, score: T) -> Self {
        Self {
            key: Vec::new(),
            value: Vec::new(),
            score,
            origin_pos,
        }
    }

    pub fn dim(&self) -> usize {
        self.key.len()
    }
}

/// Borrowed view of a resident token.
#[derive(Debug, Clone, Copy)]
pub struct EntryRef<'a, T> {
    pub key: &'a [T],
    pub value: &'a [T],
    pub score: T,
    pub origin_pos: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RingError {
    #[error("entry dimension {got} does not match store dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry key and value dimensions differ ({key} vs {value})")]
    KeyValueMismatch { key: usize, value: usize },
    #[error("entry score must be finite and non-negative")]
    InvalidScore,
    #[error("store is empty")]
    Empty,
    #[error("store has zero capacity")]
    ZeroCapacity,
}

/// Fixed-capacity circular buffer with O(1) insert-with-overwrite.
#[derive(Debug, Clone)]
pub struct RingStore<T> {
    dim: usize,
    capacity: usize,
    /// Next insertion slot; when full this is also the oldest slot.
    xi: usize,
    count: usize,
    keys: Vec<T>,
    values: Vec<T>,
    scores: Vec<T>,
    origins: Vec<u64>,
}

impl<T: Scalar> RingStore<T> {
    /// A store with `capacity` slots of dimension `dim`. Storage is
    /// preallocated here and never grows.
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            dim,
            capacity,
            xi: 0,
            count: 0,
            keys: vec![T::zero(); capacity * dim],
            values: vec![T::zero(); capacity * dim],
            scores: vec![T::zero(); capacity],
            origins: vec![0; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_full(&self) -> bool {
        self.count == self.capacity
    }

    /// Physical slot of the i-th entry in oldest→newest order.
    #[inline]
    fn slot(&self, logical: usize) -> usize {
        debug_assert!(logical < self.count);
        (self.xi + self.capacity - self.count + logical) % self.capacity
    }

    fn check_entry(&self, entry: &CacheEntry<T>) -> Result<(), RingError> {
        if entry.key.len() != entry.value.len() {
            return Err(RingError::KeyValueMismatch {
                key: entry.key.len(),
                value: entry.value.len(),
            });
        }
        if entry.key.len() != self.dim {
            return Err(RingError::DimensionMismatch {
                expected: self.dim,
                got: entry.key.len(),
            });
        }
        if !entry.score.is_finite() || entry.score < T::zero() {
            return Err(RingError::InvalidScore);
        }
        Ok(())
    }

    fn write_slot(&mut self, slot: usize, entry: &CacheEntry<T>) {
        self.keys[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(&entry.key);
        self.values[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(&entry.value);
        self.scores[slot] = entry.score;
        self.origins[slot] = entry.origin_pos;
    }

    fn read_slot(&self, slot: usize) -> CacheEntry<T> {
        CacheEntry {
            key: self.keys[slot * self.dim..(slot + 1) * self.dim].to_vec(),
            value: self.values[slot * self.dim..(slot + 1) * self.dim].to_vec(),
            score: self.scores[slot],
            origin_pos: self.origins[slot],
        }
    }

    fn ref_slot(&self, slot: usize) -> EntryRef<'_, T> {
        EntryRef {
            key: &self.keys[slot * self.dim..(slot + 1) * self.dim],
            value: &self.values[slot * self.dim..(slot + 1) * self.dim],
            score: self.scores[slot],
            origin_pos: self.origins[slot],
        }
    }

    /// Insert `entry` as the newest element. Below capacity this is a plain
    /// append; at capacity it overwrites the oldest slot in place and returns
    /// the displaced entry.
    pub fn push_overwrite(
        &mut self,
        entry: CacheEntry<T>,
    ) -> Result<Option<CacheEntry<T>>, RingError> {
        if self.capacity == 0 {
            return Err(RingError::ZeroCapacity);
        }
        self.check_entry(&entry)?;
        let evicted = if self.is_full() {
            Some(self.read_slot(self.xi))
        } else {
            self.count += 1;
            None
        };
        let slot = self.xi;
        self.write_slot(slot, &entry);
        self.xi = (self.xi + 1) % self.capacity;
        Ok(evicted)
    }

    /// Remove and return the most recently inserted entry. `xi` retreats so
    /// the vacated slot is the next insertion target.
    pub fn evict_newest(&mut self) -> Result<CacheEntry<T>, RingError> {
        if self.count == 0 {
            return Err(RingError::Empty);
        }
        let slot = (self.xi + self.capacity - 1) % self.capacity;
        let entry = self.read_slot(slot);
        self.xi = slot;
        self.count -= 1;
        Ok(entry)
    }

    /// Remove and return the oldest entry. `xi` is unchanged; the hole is at
    /// the old end of the logical window.
    pub fn evict_oldest(&mut self) -> Result<CacheEntry<T>, RingError> {
        if self.count == 0 {
            return Err(RingError::Empty);
        }
        let slot = self.slot(0);
        let entry = self.read_slot(slot);
        self.count -= 1;
        Ok(entry)
    }

    /// Newest entry without mutation; `None` when empty.
    pub fn peek_newest(&self) -> Option<EntryRef<'_, T>> {
        if self.count == 0 {
            return None;
        }
        Some(self.ref_slot((self.xi + self.capacity - 1) % self.capacity))
    }

    /// Oldest entry without mutation; `None` when empty.
    pub fn peek_oldest(&self) -> Option<EntryRef<'_, T>> {
        if self.count == 0 {
            return None;
        }
        Some(self.ref_slot(self.slot(0)))
    }

    /// Iterate resident entries oldest → newest.
    pub fn iter(&self) -> impl Iterator<Item = EntryRef<'_, T>> + '_ {
        (0..self.count).map(move |i| self.ref_slot(self.slot(i)))
    }

    pub fn origin_at(&self, logical: usize) -> u64 {
        self.origins[self.slot(logical)]
    }

    pub fn score_at(&self, logical: usize) -> T {
        self.scores[self.slot(logical)]
    }

    pub fn set_score_at(&mut self, logical: usize, score: T) {
        let slot = self.slot(logical);
        self.scores[slot] = score;
    }
}
