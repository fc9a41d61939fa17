//! Attention-mask reconstruction from eviction traces.
//!
//! A completed trace pins down, for every token, when it entered the cache
//! and which later insertion discarded it. From those intervals the full
//! S×S binary attention mask can be rebuilt: query `i` attends to `j ≤ i`
//! iff `j` is in the same chunk or still resident when `i`'s chunk ran.

use std::io::{self, Write};

use crate::trace::{EvictionTrace, TraceError, TraceEventKind};

/// Bit-packed square binary matrix.
#[derive(Debug, Clone)]
pub struct AttentionMask {
    n: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl AttentionMask {
    pub fn new(n: usize) -> Self {
        let words_per_row = n.div_ceil(64);
        Self {
            n,
            words_per_row,
            bits: vec![0; n * words_per_row],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize) {
        debug_assert!(row < self.n && col < self.n);
        self.bits[row * self.words_per_row + col / 64] |= 1u64 << (col % 64);
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.words_per_row + col / 64] & (1u64 << (col % 64)) != 0
    }

    /// Number of attended positions in a row.
    pub fn count_row(&self, row: usize) -> usize {
        let words = &self.bits[row * self.words_per_row..(row + 1) * self.words_per_row];
        words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Oldest (leftmost) attended column in a row.
    pub fn first_attended(&self, row: usize) -> Option<usize> {
        let words = &self.bits[row * self.words_per_row..(row + 1) * self.words_per_row];
        for (wi, w) in words.iter().enumerate() {
            if *w != 0 {
                return Some(wi * 64 + w.trailing_zeros() as usize);
            }
        }
        None
    }

    /// Binary P5 portable graymap, one byte per pixel: 0 masked, 255 attended.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.n, self.n)?;
        let mut row_buf = vec![0u8; self.n];
        for r in 0..self.n {
            for (c, px) in row_buf.iter_mut().enumerate() {
                *px = if self.get(r, c) { 255 } else { 0 };
            }
            w.write_all(&row_buf)?;
        }
        Ok(())
    }

    /// CSV mirror of the mask: one row per line of 0/1 cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = String::with_capacity(self.n * 2);
        for r in 0..self.n {
            line.clear();
            for c in 0..self.n {
                if c > 0 {
                    line.push(',');
                }
                line.push(if self.get(r, c) { '1' } else { '0' });
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Rebuild the effective attention mask of a completed run of `seq_len`
/// tokens processed with the given prefill `stride` (1 for per-token
/// replay). Entry `(i, j)` is set iff token `j` was visible to query `i`:
/// either both sit in the same chunk with `j ≤ i`, or `j` was still cache
/// resident when `i`'s chunk ran.
pub fn reconstruct_mask(
    trace: &EvictionTrace,
    seq_len: usize,
    stride: usize,
) -> Result<AttentionMask, TraceError> {
    assert!(stride >= 1, "stride must be positive");
    // Which origin each post-sink step inserted, and who was discarded when.
    let mut step_origin: Vec<Option<u64>> = vec![None; seq_len + 1];
    let mut inserted = vec![false; seq_len];
    let mut kill_origin: Vec<Option<u64>> = vec![None; seq_len];
    for e in trace.events() {
        match e.kind {
            TraceEventKind::SinkAdd => {
                if (e.origin_pos as usize) < seq_len {
                    inserted[e.origin_pos as usize] = true;
                }
            }
            TraceEventKind::Accept if e.sub_cache == 1 => {
                if (e.origin_pos as usize) < seq_len {
                    inserted[e.origin_pos as usize] = true;
                }
                if (e.step as usize) < step_origin.len() {
                    step_origin[e.step as usize] = Some(e.origin_pos);
                }
            }
            _ => {}
        }
    }
    let got = inserted.iter().filter(|b| **b).count();
    if got < seq_len {
        return Err(TraceError::Incomplete {
            expected: seq_len,
            got,
        });
    }
    for e in trace.events() {
        if e.kind == TraceEventKind::FinalDiscard {
            // Discards only happen inside an insertion, so the step maps to
            // the token whose arrival caused them.
            let killer = match step_origin.get(e.step as usize).copied().flatten() {
                Some(origin) => origin,
                None => {
                    return Err(TraceError::Incomplete {
                        expected: seq_len,
                        got,
                    })
                }
            };
            if (e.origin_pos as usize) < seq_len {
                kill_origin[e.origin_pos as usize] = Some(killer);
            }
        }
    }

    let chunk_of = |pos: usize| pos / stride;
    let mut mask = AttentionMask::new(seq_len);
    for j in 0..seq_len {
        let cj = chunk_of(j);
        // In-chunk causal visibility.
        let chunk_end = ((cj + 1) * stride).min(seq_len);
        for i in j..chunk_end {
            mask.set(i, j);
        }
        // Cache-resident visibility: from the next chunk through the chunk
        // whose insertions discarded j (that chunk's queries ran first).
        let vis_end = match kill_origin[j] {
            Some(killer) => ((chunk_of(killer as usize) + 1) * stride).min(seq_len),
            None => seq_len,
        };
        for i in chunk_end..vis_end {
            mask.set(i, j);
        }
    }
    Ok(mask)
}
