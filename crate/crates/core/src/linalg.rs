//! Small dense linear algebra helpers on top of `nalgebra`.

use alloc::vec;
use alloc::vec::Vec;

pub use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;

/// Determinants below this magnitude are treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| libm::fmax(acc, libm::fabs(*x)))
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| libm::fmax(acc, libm::fabs(x - y)))
}

pub fn identity_residual(m: &Matrix) -> f64 {
    max_abs_diff(m, &Matrix::identity(m.nrows(), m.ncols()))
}

/// Inverse with the determinant gate, returning the determinant as well.
pub fn checked_inverse(m: &Matrix) -> Option<(Matrix, f64)> {
    let det = m.clone().lu().determinant();
    if !det.is_finite() || libm::fabs(det) < SINGULAR_DET {
        return None;
    }
    m.clone().try_inverse().map(|inv| (inv, det))
}

pub fn vec_max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| libm::fmax(acc, libm::fabs(x - y)))
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Dense `n x n x n` array indexed `[a][b][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank3 {
    n: usize,
    data: Vec<f64>,
}

impl Rank3 {
    pub fn zeros(n: usize) -> Self {
        Rank3 {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, x| libm::fmax(acc, libm::fabs(*x)))
    }

    pub fn max_abs_diff(&self, other: &Rank3) -> f64 {
        vec_max_abs_diff(&self.data, &other.data)
    }

    /// Nested `[a][b][c]` vectors, for serialization.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n)
            .map(|a| {
                (0..self.n)
                    .map(|b| (0..self.n).map(|c| self.get(a, b, c)).collect())
                    .collect()
            })
            .collect()
    }
}

/// Pairwise (tree) summation; the split points depend only on the length,
/// so the result is bit-stable for a given input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Component-wise pairwise summation of equally long vectors.
pub fn pairwise_sum_vectors(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut column = Vec::with_capacity(rows.len());
    (0..width)
        .map(|k| {
            column.clear();
            column.extend(rows.iter().map(|r| r[k]));
            pairwise_sum(&column)
        })
        .collect()
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
