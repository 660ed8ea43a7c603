//! Sparse matrix in triplet form with a direct LU solve.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("dimension mismatch: matrix is {n}x{n}, right-hand side has {rhs}")]
    Dimension { n: usize, rhs: usize },
}

/// Square sparse matrix stored as `(row, col, value)` triplets.
///
/// Duplicate entries are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        SparseMatrix { n, triplets: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.triplets.push((row, col, value));
        }
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.triplets {
            m[(r, c)] += v;
        }
        m
    }

    /// Solves `A x = rhs` by sparse LU with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if rhs.len() != self.n {
            return Err(LinalgError::Dimension { n: self.n, rhs: rhs.len() });
        }
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let entries: Vec<Triplet<usize, usize, f64>> =
            self.triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &entries)
            .map_err(|e| LinalgError::SolveFailure(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| LinalgError::SolveFailure(format!("{e:?}")))?;
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        lu.solve_in_place(x.as_mut());
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinalgError::SolveFailure("singular matrix (non-finite solution)".into()))
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_with_duplicates() {
        let mut a = SparseMatrix::new(3);
        a.push(0, 0, 2.0);
        a.push(0, 0, 2.0);
        a.push(0, 2, 1.0);
        a.push(1, 1, 3.0);
        a.push(2, 0, 1.0);
        a.push(2, 2, 5.0);
        let x = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x);
        let sol = a.solve(&b).unwrap();
        for (s, e) in sol.iter().zip(x) {
            assert!((s - e).abs() < 1e-14);
        }
        assert_eq!(a.to_dense()[(0, 0)], 4.0);
    }

    #[test]
    fn needs_pivoting() {
        let mut a = SparseMatrix::new(2);
        a.push(0, 1, 1.0);
        a.push(1, 0, 1.0);
        let sol = a.solve(&[3.0, 4.0]).unwrap();
        assert_eq!(sol, vec![4.0, 3.0]);
    }

    #[test]
    fn singular_is_an_error() {
        let mut a = SparseMatrix::new(2);
        a.push(0, 0, 1.0);
        a.push(1, 0, 1.0);
        assert!(a.solve(&[1.0, 1.0]).is_err());
        assert!(matches!(a.solve(&[1.0]), Err(LinalgError::Dimension { .. })));
    }
}
