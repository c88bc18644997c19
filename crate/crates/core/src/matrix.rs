//! Dense row-major square matrices over `f64`.

use std::fmt;
use std::ops::{Index, IndexMut};

#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows. Returns `None` unless every row has
    /// exactly `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// `M h`, i.e. `(Mh)(x) = Σ_y M(x,y) h(y)`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        debug_assert_eq!(h.len(), self.dim);
        self.rows()
            .map(|r| r.iter().zip(h).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `ν M`, i.e. `(νM)(y) = Σ_x ν(x) M(x,y)`.
    pub fn left_apply(&self, nu: &[f64]) -> Vec<f64> {
        debug_assert_eq!(nu.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (x, r) in self.rows().enumerate() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += nu[x] * v;
            }
        }
        out
    }

    /// Largest `|Σ_y M(x,y) − 1|` over rows.
    pub fn row_sum_residual(&self) -> f64 {
        self.rows()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// `Σ_x ν(x) h(x)`.
pub fn dot(nu: &[f64], h: &[f64]) -> f64 {
    nu.iter().zip(h).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_and_left_apply() {
        let m = SquareMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.apply(&[1.0, 3.0]), vec![2.0, 1.0]);
        assert_eq!(m.left_apply(&[2.0 / 3.0, 1.0 / 3.0]), vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(m.row_sum_residual(), 0.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(SquareMatrix::from_rows(&[vec![1.0], vec![0.0, 1.0]]).is_none());
    }
}
