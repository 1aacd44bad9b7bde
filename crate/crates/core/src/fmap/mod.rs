//! Functional maps between two shapes and their pointwise counterparts.
//!
//! Conventions: `M` is the source shape whose vertices receive a match on the
//! target `N`. A pointwise map `Π` is `n_M × n_N`, and the functional map
//! `C` (`k_M × k_N`) transfers spectral coefficients of functions on `N` to `M`.

pub mod nn;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::filters::{FilterBank, FilterResponse};
use crate::spectral::SpectralBasis;
use crate::{Error, Result};

pub use nn::{check_distinct_rows, min_row_separation, nearest_rows, nearest_rows_with, NnStrategy};

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    /// `k_M × k_N`.
    pub c: DMatrix<f64>,
}

impl FunctionalMap {
    pub fn new(c: DMatrix<f64>) -> Self {
        Self { c }
    }

    pub fn identity(k: usize) -> Self {
        Self::new(DMatrix::identity(k, k))
    }

    /// Plain-text matrix, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.c.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: format!("bad matrix entry `{v}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("row has {} entries, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
        Ok(Self::new(DMatrix::from_fn(r, c, |i, j| rows[i][j])))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(Error::io(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path).map_err(Error::io(path))?)
    }
}

/// Vertex correspondence from `M` to `N`.
#[derive(Debug, Clone, PartialEq)]
pub enum PointwiseMap {
    /// Target index per source vertex.
    Hard(Vec<usize>),
    /// Row-stochastic `n_M × n_N` matrix.
    Soft(DMatrix<f64>),
}

impl PointwiseMap {
    pub fn n_source(&self) -> usize {
        match self {
            PointwiseMap::Hard(t) => t.len(),
            PointwiseMap::Soft(p) => p.nrows(),
        }
    }

    pub fn as_hard(&self) -> Option<&[usize]> {
        match self {
            PointwiseMap::Hard(t) => Some(t),
            PointwiseMap::Soft(_) => None,
        }
    }

    /// `Π F` for an `n_N × c` matrix: row gather for hard maps.
    pub fn apply(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            PointwiseMap::Hard(t) => {
                if let Some(&bad) = t.iter().find(|&&j| j >= f.nrows()) {
                    return Err(Error::Dimension(format!(
                        "map target {bad} out of range for {} target vertices",
                        f.nrows()
                    )));
                }
                Ok(DMatrix::from_fn(t.len(), f.ncols(), |i, c| f[(t[i], c)]))
            }
            PointwiseMap::Soft(p) => {
                if p.ncols() != f.nrows() {
                    return Err(Error::Dimension(format!(
                        "soft map has {} columns, function has {} rows",
                        p.ncols(),
                        f.nrows()
                    )));
                }
                Ok(p * f)
            }
        }
    }
}

/// Minimizes `‖Φ_M†D_M − C Φ_N†D_N‖² + λ‖CΛ_N − Λ_M C‖²` exactly, one row of `C` at a time.
pub fn solve_fmap_descriptors(
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    d_m: &DMatrix<f64>,
    d_n: &DMatrix<f64>,
    lambda_reg: f64,
) -> Result<FunctionalMap> {
    if d_m.ncols() != d_n.ncols() {
        return Err(Error::Dimension(format!(
            "descriptor dimensions differ: {} vs {}",
            d_m.ncols(),
            d_n.ncols()
        )));
    }
    if !(lambda_reg >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization weight must be nonnegative, got {lambda_reg}"
        )));
    }
    let a = basis_m.project_matrix(d_m)?; // k_M × d
    let b = basis_n.project_matrix(d_n)?; // k_N × d
    let bbt = &b * b.transpose();
    let rhs = &b * a.transpose(); // column i is B a_iᵀ
    let (lm, ln) = (&basis_m.eigenvalues, &basis_n.eigenvalues);
    let rows: Vec<DVector<f64>> = (0..basis_m.k())
        .into_par_iter()
        .map(|i| {
            let mut sys = bbt.clone();
            for j in 0..basis_n.k() {
                sys[(j, j)] += lambda_reg * (ln[j] - lm[i]).powi(2);
            }
            let chol = sys.cholesky().ok_or_else(|| {
                Error::Singular(format!(
                    "descriptor system for row {i} is rank deficient; use a positive regularization weight"
                ))
            })?;
            Ok(chol.solve(&rhs.column(i).into_owned()))
        })
        .collect::<Result<_>>()?;
    Ok(FunctionalMap::new(DMatrix::from_fn(basis_m.k(), basis_n.k(), |i, j| rows[i][j])))
}

/// [`solve_fmap_descriptors`] with eigenvalues measured in units of the pair's
/// largest eigenvalue, which makes `lambda_reg` independent of mesh scale.
pub fn solve_fmap_descriptors_scaled(
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    d_m: &DMatrix<f64>,
    d_n: &DMatrix<f64>,
    lambda_reg: f64,
) -> Result<FunctionalMap> {
    let top = basis_m.lambda_max().max(basis_n.lambda_max());
    let weight = if top > 0.0 { lambda_reg / (top * top) } else { lambda_reg };
    solve_fmap_descriptors(basis_m, basis_n, d_m, d_n, weight)
}

/// `C^Π = Φ_Mᵀ A_M Π Φ_N`.
pub fn fmap_from_p2p(
    pi: &PointwiseMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
) -> Result<FunctionalMap> {
    if pi.n_source() != basis_m.n() {
        return Err(Error::Dimension(format!(
            "map covers {} source vertices, source mesh has {}",
            pi.n_source(),
            basis_m.n()
        )));
    }
    let pulled = pi.apply(&basis_n.phi)?;
    Ok(FunctionalMap::new(basis_m.project_matrix(&pulled)?))
}

/// Closed-form refinement:
/// `C*_ij = C^Π_ij · Σ_s h_s(λ^M_i) h_s(λ^N_j) / G(λ^N_j)`.
pub fn filter_refine_fmap(
    c_pi: &FunctionalMap,
    response_m: &FilterResponse,
    response_n: &FilterResponse,
) -> Result<FunctionalMap> {
    let (km, kn) = c_pi.c.shape();
    if response_m.k() != km || response_n.k() != kn {
        return Err(Error::Dimension(format!(
            "map is {km}×{kn}, filter responses cover {} and {} eigenvalues",
            response_m.k(),
            response_n.k()
        )));
    }
    if response_m.channels() != response_n.channels() {
        return Err(Error::Dimension("filter responses have different channel counts".into()));
    }
    response_n.check_consistency()?;
    let kernel = response_m.h.transpose() * &response_n.h;
    Ok(FunctionalMap::new(DMatrix::from_fn(km, kn, |i, j| {
        c_pi.c[(i, j)] * kernel[(i, j)] / response_n.g[j]
    })))
}

/// Nearest row of `Φ_N Cᵀ` for every row of `Φ_M`.
pub fn p2p_from_fmap(
    c: &FunctionalMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
) -> Result<Vec<usize>> {
    if c.c.nrows() != basis_m.k() {
        return Err(Error::Dimension(format!(
            "map has {} rows, source basis has {} functions",
            c.c.nrows(),
            basis_m.k()
        )));
    }
    let embedded = basis_n.embed(&c.c)?;
    nearest_rows(&basis_m.phi, &embedded)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "softmax temperature must be positive, got {tau}"
        )));
    }
    Ok(())
}

/// One softmax row `softmax(D_N d / τ)`.
fn soft_row(d_n: &DMatrix<f64>, row: &DVector<f64>, tau: f64) -> DVector<f64> {
    let mut scores = d_n * row / tau;
    let max = scores.max();
    scores.apply(|s| *s = (*s - max).exp());
    let total = scores.sum();
    scores / total
}

/// Dense soft map `softmax(D_M D_Nᵀ / τ)`, row-wise.
pub fn soft_p2p(d_m: &DMatrix<f64>, d_n: &DMatrix<f64>, tau: f64) -> Result<PointwiseMap> {
    check_tau(tau)?;
    check_same_dim(d_m, d_n)?;
    let rows: Vec<DVector<f64>> = (0..d_m.nrows())
        .into_par_iter()
        .map(|i| soft_row(d_n, &d_m.row(i).transpose(), tau))
        .collect();
    Ok(PointwiseMap::Soft(DMatrix::from_fn(d_m.nrows(), d_n.nrows(), |i, j| rows[i][j])))
}

/// `softmax(D_M D_Nᵀ / τ) F` without materializing the `n_M × n_N` matrix.
pub fn soft_apply(
    d_m: &DMatrix<f64>,
    d_n: &DMatrix<f64>,
    tau: f64,
    f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_same_dim(d_m, d_n)?;
    if f.nrows() != d_n.nrows() {
        return Err(Error::Dimension(format!(
            "function has {} rows, target has {} vertices",
            f.nrows(),
            d_n.nrows()
        )));
    }
    let ft = f.transpose();
    let rows: Vec<DVector<f64>> = (0..d_m.nrows())
        .into_par_iter()
        .map(|i| &ft * soft_row(d_n, &d_m.row(i).transpose(), tau))
        .collect();
    Ok(DMatrix::from_fn(d_m.nrows(), f.ncols(), |i, c| rows[i][c]))
}

fn check_same_dim(d_m: &DMatrix<f64>, d_n: &DMatrix<f64>) -> Result<()> {
    if d_m.ncols() != d_n.ncols() {
        return Err(Error::Dimension(format!(
            "descriptor dimensions differ: {} vs {}",
            d_m.ncols(),
            d_n.ncols()
        )));
    }
    Ok(())
}

/// Nearest descriptor row of `N` for every vertex of `M`.
pub fn p2p_from_features(d_m: &DMatrix<f64>, d_n: &DMatrix<f64>) -> Result<Vec<usize>> {
    nearest_rows(d_m, d_n)
}

/// One entry of a refinement schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleStep {
    /// Truncate both bases to `k` and convert without filtering (a ZoomOut step).
    Ideal(usize),
    /// Closed-form filter refinement on the full bases.
    Bank(FilterBank),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub fmap: FunctionalMap,
    pub p2p: Vec<usize>,
    /// Refined map after each schedule entry.
    pub history: Vec<FunctionalMap>,
}

/// Alternates `fmap_from_p2p`, filter refinement and `p2p_from_fmap` per schedule entry.
pub fn iterative_refine(
    initial: &[usize],
    schedule: &[ScheduleStep],
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
) -> Result<Refinement> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty refinement schedule".into()));
    }
    let mut p2p = initial.to_vec();
    let mut history = Vec::with_capacity(schedule.len());
    for step in schedule {
        let pi = PointwiseMap::Hard(p2p);
        let refined = match step {
            ScheduleStep::Ideal(k) => {
                let (bm, bn) = (basis_m.truncated(*k)?, basis_n.truncated(*k)?);
                let c = fmap_from_p2p(&pi, &bm, &bn)?;
                p2p = p2p_from_fmap(&c, &bm, &bn)?;
                c
            }
            ScheduleStep::Bank(bank) => {
                let c_pi = fmap_from_p2p(&pi, basis_m, basis_n)?;
                let rm = bank.eval(&basis_m.eigenvalues)?;
                let rn = bank.eval(&basis_n.eigenvalues)?;
                let c = filter_refine_fmap(&c_pi, &rm, &rn)?;
                p2p = p2p_from_fmap(&c, basis_m, basis_n)?;
                c
            }
        };
        history.push(refined);
    }
    Ok(Refinement {
        fmap: history.last().cloned().expect("non-empty schedule"),
        p2p,
        history,
    })
}

/// `Ideal(start), Ideal(start + step), …` up to and including `k`.
pub fn zoomout_schedule(start: usize, step: usize, k: usize) -> Result<Vec<ScheduleStep>> {
    if start == 0 || step == 0 || start > k {
        return Err(Error::InvalidArgument(format!(
            "invalid ZoomOut schedule start {start}, step {step}, k {k}"
        )));
    }
    let mut out: Vec<ScheduleStep> = (start..=k).step_by(step).map(ScheduleStep::Ideal).collect();
    if out.last() != Some(&ScheduleStep::Ideal(k)) {
        out.push(ScheduleStep::Ideal(k));
    }
    Ok(out)
}

/// One target index per line; `one_based` adds 1 on output.
pub fn correspondence_to_text(p2p: &[usize], one_based: bool) -> String {
    let offset = usize::from(one_based);
    let mut out = String::with_capacity(p2p.len() * 6);
    for &j in p2p {
        let _ = writeln!(out, "{}", j + offset);
    }
    out
}

pub fn write_correspondence(path: impl AsRef<Path>, p2p: &[usize], one_based: bool) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, correspondence_to_text(p2p, one_based)).map_err(Error::io(path))
}

pub fn parse_correspondence(text: &str, one_based: bool) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: usize = line.parse().map_err(|e| Error::Parse {
            line: i + 1,
            msg: format!("bad vertex index `{line}`: {e}"),
        })?;
        if one_based && v == 0 {
            return Err(Error::Parse {
                line: i + 1,
                msg: "index 0 in a one-based file".into(),
            });
        }
        out.push(v - usize::from(one_based));
    }
    Ok(out)
}

pub fn read_correspondence(path: impl AsRef<Path>, one_based: bool) -> Result<Vec<usize>> {
    let path = path.as_ref();
    parse_correspondence(&fs::read_to_string(path).map_err(Error::io(path))?, one_based)
}

#[cfg(test)]
mod tests;
