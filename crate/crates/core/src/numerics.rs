//! Minimal dense linear algebra and seeded randomness.
//!
//! Everything is 64-bit floats in row-major layout, one example per row.
//! Shape mismatches are programmer errors and panic with both shapes in the
//! message. The only random source is [`Rng`], a seeded ChaCha stream, so
//! identical seeds reproduce identical values across runs and platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a flat row-major buffer.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match shape {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    /// Build from nested rows; convenient in tests. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "from_rows requires at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows: {} vs {cols}", r.len());
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Standard matrix product.
    ///
    /// Panics on inner-dimension mismatch, naming both shapes.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} . {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let n = rhs.cols;
        let mut out = Matrix::zeros(self.rows, n);
        // i-k-j order: the inner loop is a scaled row accumulation, which
        // vectorizes without reassociating a dot-product reduction.
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Add a `1 x n` bias row to every row.
    pub fn add_row_broadcast(&self, bias: &Matrix) -> Matrix {
        assert!(
            bias.rows == 1 && bias.cols == self.cols,
            "row broadcast shape mismatch: {}x{} + {}x{}",
            self.rows,
            self.cols,
            bias.rows,
            bias.cols
        );
        let mut out = self.clone();
        for i in 0..out.rows {
            let row = &mut out.data[i * out.cols..(i + 1) * out.cols];
            for (v, &b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        out
    }

    /// Apply `f` to every element.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Combine two same-shape matrices elementwise.
    pub fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(
            self.shape(),
            other.shape(),
            "elementwise shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Per-column mean and biased (divide-by-m) variance.
    ///
    /// The biased estimator matches batch-normalization training statistics.
    /// Panics on an empty batch.
    pub fn column_mean_var(&self) -> (Matrix, Matrix) {
        assert!(self.rows >= 1, "column_mean_var on empty batch (0x{} matrix)", self.cols);
        let m = self.rows as f64;
        let mut mean = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (s, &v) in mean.data.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        for s in &mut mean.data {
            *s /= m;
        }
        let mut var = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for ((s, &v), &mu) in var.data.iter_mut().zip(self.row(i)).zip(&mean.data) {
                let d = v - mu;
                *s += d * d;
            }
        }
        for s in &mut var.data {
            *s /= m;
        }
        (mean, var)
    }

    /// Sum each column into a `1 x n` row.
    pub fn column_sums(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        for i in 0..self.rows {
            for (s, &v) in out.data.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        out
    }

    /// Index of each row's maximum; ties break to the lowest index so
    /// downstream decisions are deterministic.
    pub fn argmax_rows(&self) -> Vec<usize> {
        assert!(self.cols >= 1, "argmax_rows on matrix with zero columns");
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Seeded deterministic random source (ChaCha8 under the hood).
///
/// Separate concerns draw from separate streams of the same seed so that,
/// for example, weight initialization and batch shuffling never consume
/// from each other's sequence.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

/// Stream ids for [`Rng::with_stream`].
pub mod streams {
    pub const WEIGHT_INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// I.i.d. zero-mean normal draws scaled by `stddev` (zero stddev yields
    /// an exactly-zero matrix).
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, stddev: f64) -> Matrix {
        assert!(stddev >= 0.0, "stddev must be non-negative, got {stddev}");
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.inner);
                z * stddev
            })
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn shuffle<T>(&mut self, values: &mut [T]) {
        use rand::seq::SliceRandom;
        values.shuffle(&mut self.inner);
    }

    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
