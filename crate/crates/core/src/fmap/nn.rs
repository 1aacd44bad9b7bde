//! Exact Euclidean nearest-row search with lowest-index tie breaking.
//!
//! Small databases are scanned exhaustively. Large ones are sorted along their
//! widest coordinate and scanned outward from the query. A candidate is pruned
//! once its squared gap on that coordinate exceeds the best squared distance so
//! far. That gap is itself one of the nonnegative summands of the distance, so
//! pruning never drops a candidate the full scan would pick, even in floating
//! point. Both paths therefore return identical indices.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::{Error, Result};

/// Databases at least this large use the pruned search under [`NnStrategy::Auto`].
pub const PRUNED_MIN_ROWS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnStrategy {
    #[default]
    Auto,
    BruteForce,
    Pruned,
}

struct RowMajor {
    dim: usize,
    data: Vec<f64>,
}

impl RowMajor {
    fn new(m: &DMatrix<f64>) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self { dim, data }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(d, j)` is a better candidate than `(best_d, best_j)`.
fn improves(d: f64, j: usize, best_d: f64, best_j: usize) -> bool {
    d < best_d || (d == best_d && j < best_j)
}

struct SortedAxis {
    axis: usize,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl SortedAxis {
    fn new(data: &RowMajor) -> Self {
        let n = data.len();
        let axis = (0..data.dim)
            .map(|c| {
                let mean = (0..n).map(|i| data.row(i)[c]).sum::<f64>() / n as f64;
                let var = (0..n).map(|i| (data.row(i)[c] - mean).powi(2)).sum::<f64>();
                (c, var)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data.row(a)[axis].total_cmp(&data.row(b)[axis]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| data.row(i)[axis]).collect();
        Self { axis, order, keys }
    }

    /// Nearest row to `q`, skipping `exclude`.
    fn query(&self, data: &RowMajor, q: &[f64], exclude: Option<usize>) -> (usize, f64) {
        let key = q[self.axis];
        let start = self.keys.partition_point(|&k| k < key);
        let (mut best_j, mut best_d) = (usize::MAX, f64::INFINITY);
        let visit = |pos: usize, best_j: &mut usize, best_d: &mut f64| -> bool {
            let gap = self.keys[pos] - key;
            if gap * gap > *best_d {
                return false;
            }
            let j = self.order[pos];
            if Some(j) != exclude {
                let d = sq_dist(q, data.row(j));
                if improves(d, j, *best_d, *best_j) {
                    *best_d = d;
                    *best_j = j;
                }
            }
            true
        };
        let (mut lo, mut hi) = (start, start);
        let (mut lo_open, mut hi_open) = (start > 0, start < self.keys.len());
        while lo_open || hi_open {
            if hi_open {
                hi_open = visit(hi, &mut best_j, &mut best_d);
                hi += 1;
                hi_open &= hi < self.keys.len();
            }
            if lo_open {
                lo -= 1;
                lo_open = visit(lo, &mut best_j, &mut best_d) && lo > 0;
            }
        }
        (best_j, best_d)
    }
}

fn brute(data: &RowMajor, q: &[f64], exclude: Option<usize>) -> (usize, f64) {
    let (mut best_j, mut best_d) = (usize::MAX, f64::INFINITY);
    for j in 0..data.len() {
        if Some(j) == exclude {
            continue;
        }
        let d = sq_dist(q, data.row(j));
        if improves(d, j, best_d, best_j) {
            best_d = d;
            best_j = j;
        }
    }
    (best_j, best_d)
}

fn check_shapes(queries: &DMatrix<f64>, data: &DMatrix<f64>) -> Result<()> {
    if queries.ncols() != data.ncols() {
        return Err(Error::Dimension(format!(
            "queries have {} columns, database has {}",
            queries.ncols(),
            data.ncols()
        )));
    }
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("empty nearest-neighbour database".into()));
    }
    Ok(())
}

/// For each row of `queries`, the index of the nearest row of `data`.
pub fn nearest_rows(queries: &DMatrix<f64>, data: &DMatrix<f64>) -> Result<Vec<usize>> {
    nearest_rows_with(queries, data, NnStrategy::Auto)
}

pub fn nearest_rows_with(
    queries: &DMatrix<f64>,
    data: &DMatrix<f64>,
    strategy: NnStrategy,
) -> Result<Vec<usize>> {
    check_shapes(queries, data)?;
    let q = RowMajor::new(queries);
    let d = RowMajor::new(data);
    let n_q = queries.nrows();
    let pruned = match strategy {
        NnStrategy::Auto => data.nrows() >= PRUNED_MIN_ROWS && data.ncols() > 0,
        NnStrategy::BruteForce => false,
        NnStrategy::Pruned => data.ncols() > 0,
    };
    let out = if pruned {
        let index = SortedAxis::new(&d);
        (0..n_q)
            .into_par_iter()
            .map(|i| index.query(&d, q.row(i), None).0)
            .collect()
    } else if data.ncols() == 0 {
        vec![0; n_q]
    } else {
        (0..n_q).into_par_iter().map(|i| brute(&d, q.row(i), None).0).collect()
    };
    Ok(out)
}

/// Smallest Euclidean distance between two distinct rows, with the pair `(i, j)`.
pub fn min_row_separation(m: &DMatrix<f64>) -> Option<(f64, usize, usize)> {
    if m.nrows() < 2 || m.ncols() == 0 {
        return None;
    }
    let d = RowMajor::new(m);
    let index = SortedAxis::new(&d);
    (0..m.nrows())
        .into_par_iter()
        .map(|i| {
            let (j, dist) = index.query(&d, d.row(i), Some(i));
            (dist.sqrt(), i.min(j), i.max(j))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))))
}

/// Fails unless every pair of rows is more than `tol` apart.
pub fn check_distinct_rows(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    match min_row_separation(m) {
        Some((d, i, j)) if d <= tol => Err(Error::InvalidArgument(format!(
            "embedding rows {i} and {j} are {d:e} apart (tolerance {tol:e}); nearest-neighbour matches are ambiguous"
        ))),
        _ => Ok(()),
    }
}
