//! Compressed sparse row matrices and an envelope Cholesky factorization.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Square sparse matrix in CSR layout with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn mul_dvector(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.mul_vec(x.as_slice()))
    }

    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.n {
                out[(i, c)] = self.row(i).map(|(j, v)| v * col[j]).sum();
            }
        }
        out
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    /// Maximum absolute row sum; equals the 1-norm for symmetric matrices and
    /// bounds the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Returns `D M D + shift·I` for a diagonal `D`.
    pub fn scaled_shifted(&self, diag: &[f64], shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            let mut has_diag = false;
            for p in out.row_ptr[i]..out.row_ptr[i + 1] {
                let j = out.col_idx[p];
                out.values[p] *= diag[i] * diag[j];
                if i == j {
                    out.values[p] += shift;
                    has_diag = true;
                }
            }
            debug_assert!(has_diag || shift == 0.0);
        }
        out
    }

    /// Reverse Cuthill–McKee ordering of the sparsity graph. `perm[new] = old`.
    pub fn rcm_ordering(&self) -> Vec<usize> {
        let n = self.n;
        let degree: Vec<usize> = (0..n).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut by_degree: Vec<usize> = (0..n).collect();
        by_degree.sort_by_key(|&i| (degree[i], i));
        for &start in &by_degree {
            if visited[start] {
                continue;
            }
            visited[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut nbrs: Vec<usize> = self
                    .row(v)
                    .map(|(j, _)| j)
                    .filter(|&j| !visited[j])
                    .collect();
                nbrs.sort_by_key(|&j| (degree[j], j));
                for j in nbrs {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }
}

/// Envelope (profile) Cholesky factor `P M Pᵀ = L Lᵀ` of a symmetric positive
/// definite sparse matrix under reverse Cuthill–McKee ordering.
#[derive(Debug, Clone)]
pub struct ProfileCholesky {
    perm: Vec<usize>,
    first_col: Vec<usize>,
    row_start: Vec<usize>,
    lower: Vec<f64>,
}

impl ProfileCholesky {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.n();
        let perm = m.rcm_ordering();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first_col: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in m.row(old) {
                let jn = inv[j];
                if jn < first_col[new] {
                    first_col[new] = jn;
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            let len = i - first_col[i] + 1;
            row_start.push(row_start[i] + len);
        }
        let mut lower = vec![0.0; row_start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in m.row(old) {
                let jn = inv[j];
                if jn <= new {
                    lower[row_start[new] + jn - first_col[new]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first_col[i];
            for j in fi..i {
                let fj = first_col[j];
                let start = fi.max(fj);
                let mut s = lower[row_start[i] + j - fi];
                for k in start..j {
                    s -= lower[row_start[i] + k - fi] * lower[row_start[j] + k - fj];
                }
                let ljj = lower[row_start[j] + j - fj];
                lower[row_start[i] + j - fi] = s / ljj;
            }
            let mut d = lower[row_start[i] + i - fi];
            for k in fi..i {
                let l = lower[row_start[i] + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "matrix not positive definite at pivot {i} (value {d:e})"
                )));
            }
            lower[row_start[i] + i - fi] = d.sqrt();
        }
        Ok(Self {
            perm,
            first_col,
            row_start,
            lower,
        })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first_col[i];
            let base = self.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.lower[base + k - fi] * y[k];
            }
            y[i] = s / self.lower[base + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first_col[i];
            let base = self.row_start[i];
            y[i] /= self.lower[base + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.lower[base + k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Number of stored lower-triangle entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn cholesky_solves_against_dense() {
        let m = laplacian_1d(40, 0.1);
        let chol = ProfileCholesky::factor(&m).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let r = m.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(ProfileCholesky::factor(&m), Err(Error::Singular(_))));
    }
}
