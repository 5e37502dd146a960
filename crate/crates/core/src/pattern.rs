//! Bit-packed activation patterns.
//!
//! A [`PatternMatrix`] holds one row per sample and one bit per neuron of a
//! single hidden layer. Rows are packed into `u64` words so pairwise Hamming
//! counts reduce to XOR plus popcount.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl PatternMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words_per_row,
            bits: vec![0; rows * words_per_row],
        }
    }

    /// Builds a matrix from 0/1 rows. Any non-zero byte counts as active.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    left: cols,
                    right: row.len(),
                });
            }
            for (j, &b) in row.iter().enumerate() {
                m.set(i, j, b != 0);
            }
        }
        Ok(m)
    }

    /// Active iff strictly greater than zero.
    pub fn from_values(rows: usize, cols: usize, values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            let src = &values[i * cols..(i + 1) * cols];
            let dst = &mut m.bits[i * m.words_per_row..(i + 1) * m.words_per_row];
            for (j, &v) in src.iter().enumerate() {
                if v > 0.0 {
                    dst[j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Pattern length `k` (neurons in the layer).
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words_per_row + j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        let w = &mut self.bits[i * self.words_per_row + j / 64];
        let mask = 1u64 << (j % 64);
        if on {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / 64] ^= 1u64 << (j % 64);
    }

    #[inline]
    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// Row `i` unpacked to 0/1 bytes.
    pub fn row(&self, i: usize) -> Vec<u8> {
        (0..self.cols).map(|j| self.get(i, j) as u8).collect()
    }

    /// Number of positions where rows `i` and `j` differ.
    #[inline]
    pub fn hamming_count(&self, i: usize, j: usize) -> u32 {
        self.row_words(i)
            .iter()
            .zip(self.row_words(j))
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut bits = Vec::with_capacity(indices.len() * self.words_per_row);
        for &i in indices {
            bits.extend_from_slice(self.row_words(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            words_per_row: self.words_per_row,
            bits,
        }
    }

    pub fn active_fraction(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let ones: u64 = self.bits.iter().map(|w| w.count_ones() as u64).sum();
        ones as f64 / (self.rows * self.cols) as f64
    }
}

/// Patterns of every hidden layer for one batch, in layer order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivationRecord {
    pub layers: Vec<PatternMatrix>,
}

impl ActivationRecord {
    pub fn new(layers: Vec<PatternMatrix>) -> Self {
        Self { layers }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Batch size, taken from the first layer.
    pub fn batch_size(&self) -> usize {
        self.layers.first().map_or(0, PatternMatrix::rows)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.select_rows(indices)).collect(),
        }
    }
}
