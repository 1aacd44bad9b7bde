//! Wave and heat kernel signatures built from a truncated eigenbasis.
//!
//! These stand in for learned per-vertex features: they initialize the
//! descriptor-based functional map and the feature nearest-neighbour map.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::spectral::SpectralBasis;
use crate::{Error, Result};

/// Default WKS bandwidth in units of the energy-grid spacing.
pub const WKS_VARIANCE_FACTOR: f64 = 7.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DescriptorKind {
    /// Log-energy levels and the shared Gaussian bandwidth.
    Wks { energies: Vec<f64>, sigma: f64 },
    Hks { times: Vec<f64> },
}

/// Per-vertex descriptors, one row per mesh vertex in mesh order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub values: DMatrix<f64>,
    pub kind: DescriptorKind,
}

impl DescriptorSet {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Scales every row to unit Euclidean norm; all-zero rows are left untouched.
    pub fn normalized_rows(mut self) -> Self {
        for mut row in self.values.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let prefix = match self.kind {
            DescriptorKind::Wks { .. } => "wks",
            DescriptorKind::Hks { .. } => "hks",
        };
        let header: Vec<String> = (0..self.dim()).map(|j| format!("{prefix}{j}")).collect();
        let _ = writeln!(out, "vertex,{}", header.join(","));
        for (i, row) in self.values.row_iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row.iter() {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(Error::io(path))
    }
}

fn squared_eigenfunctions(basis: &SpectralBasis) -> DMatrix<f64> {
    basis.phi.map(|v| v * v)
}

/// Wave kernel signature with `d` log-spaced energies over `[log λ₂, log λ_k]`.
///
/// The zero eigenvalue is skipped. Each column is normalized by the sum of its
/// Gaussian weights, with bandwidth `variance_factor × grid spacing`.
pub fn wks(basis: &SpectralBasis, d: usize, variance_factor: f64) -> Result<DescriptorSet> {
    if d == 0 {
        return Err(Error::InvalidArgument("WKS needs at least one energy".into()));
    }
    if !(variance_factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "WKS variance factor must be positive, got {variance_factor}"
        )));
    }
    let k = basis.k();
    if k < 2 {
        return Err(Error::InvalidArgument("WKS needs at least two eigenpairs".into()));
    }
    let lam = &basis.eigenvalues;
    let lam_max = lam[k - 1];
    if !(lam_max > 0.0) || !lam_max.is_finite() {
        return Err(Error::InvalidArgument(
            "all eigenvalues are numerically zero".into(),
        ));
    }
    let lam_min = lam[1];
    if !(lam_min > 1e-12 * lam_max) || lam_min >= lam_max {
        return Err(Error::InvalidArgument(format!(
            "WKS needs λ_k > λ₂ > 0, got λ₂ = {lam_min:e}, λ_k = {lam_max:e}"
        )));
    }
    let (e_min, e_max) = (lam_min.ln(), lam_max.ln());
    let spacing = (e_max - e_min) / (d.max(2) - 1) as f64;
    let energies: Vec<f64> = (0..d)
        .map(|j| e_min + spacing * j as f64)
        .collect();
    let sigma = variance_factor * spacing;

    // weights[(i, j)]: contribution of eigenpair i to energy j, columns sum to one.
    let mut weights = DMatrix::<f64>::zeros(k, d);
    for (j, &e) in energies.iter().enumerate() {
        let mut total = 0.0;
        for i in 1..k {
            let w = (-(e - lam[i].ln()).powi(2) / (2.0 * sigma * sigma)).exp();
            weights[(i, j)] = w;
            total += w;
        }
        weights.column_mut(j).scale_mut(1.0 / total);
    }
    Ok(DescriptorSet {
        values: squared_eigenfunctions(basis) * weights,
        kind: DescriptorKind::Wks { energies, sigma },
    })
}

/// Heat kernel signature `Σ_i e^{−tλ_i} φ_i(x)²` for each time.
pub fn hks(basis: &SpectralBasis, times: &[f64]) -> Result<DescriptorSet> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("HKS needs at least one time".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "HKS times must be nonnegative, got {t}"
        )));
    }
    let k = basis.k();
    let kernel = DMatrix::from_fn(k, times.len(), |i, j| {
        (-times[j] * basis.eigenvalues[i]).exp()
    });
    Ok(DescriptorSet {
        values: squared_eigenfunctions(basis) * kernel,
        kind: DescriptorKind::Hks {
            times: times.to_vec(),
        },
    })
}
