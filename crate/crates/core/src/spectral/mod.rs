//! Truncated Laplace–Beltrami eigenbasis `B φ = λ A φ` and spectral projections.

pub mod cache;
mod eigen;

use nalgebra::{DMatrix, DVector};

use crate::mesh::{MassMatrix, StiffnessMatrix};
use crate::{Error, Result};

pub use eigen::{eigendecompose, eigendecompose_dense, eigendecompose_krylov, EigenSolver};

/// First `k` eigenpairs of the generalized Laplacian problem, A-orthonormal and ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    /// `n × k`, eigenfunctions as columns.
    pub phi: DMatrix<f64>,
    /// Ascending eigenvalues (1 / area units).
    pub eigenvalues: Vec<f64>,
    pub mass: MassMatrix,
}

impl SpectralBasis {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty basis")
    }

    /// `Φ† = Φᵀ A`, the (A-weighted) pseudo-inverse, `k × n`.
    pub fn pinv(&self) -> DMatrix<f64> {
        let mut p = self.phi.transpose();
        for (j, mut col) in p.column_iter_mut().enumerate() {
            col *= self.mass.diag[j];
        }
        p
    }

    /// Spectral coefficients `Φᵀ A f`.
    pub fn project(&self, f: &[f64]) -> Result<DVector<f64>> {
        if f.len() != self.n() {
            return Err(Error::Dimension(format!(
                "function has {} values, basis has {} vertices",
                f.len(),
                self.n()
            )));
        }
        let af = DVector::from_vec(self.mass.apply(f));
        Ok(self.phi.tr_mul(&af))
    }

    /// Projects every column of an `n × d` matrix: `Φᵀ A F`.
    pub fn project_matrix(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if f.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "matrix has {} rows, basis has {} vertices",
                f.nrows(),
                self.n()
            )));
        }
        let mut af = f.clone();
        for (i, mut row) in af.row_iter_mut().enumerate() {
            row *= self.mass.diag[i];
        }
        Ok(self.phi.tr_mul(&af))
    }

    /// `Φ a`
    pub fn reconstruct(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        if coeffs.len() != self.k() {
            return Err(Error::Dimension(format!(
                "{} coefficients for a basis of size {}",
                coeffs.len(),
                self.k()
            )));
        }
        Ok(&self.phi * coeffs)
    }

    /// Aligned spectral embedding `Φ Cᵀ` for a map whose columns index this basis.
    pub fn embed(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if c.ncols() != self.k() {
            return Err(Error::Dimension(format!(
                "map has {} columns, basis has {} functions",
                c.ncols(),
                self.k()
            )));
        }
        Ok(&self.phi * c.transpose())
    }

    /// The first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate basis of size {} to {k}",
                self.k()
            )));
        }
        Ok(Self {
            phi: self.phi.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            mass: self.mass.clone(),
        })
    }

    /// Largest deviation of `ΦᵀAΦ` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.pinv() * &self.phi;
        let k = self.k();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Largest `‖B φ_i − λ_i A φ_i‖₂` over the basis.
    pub fn max_residual(&self, stiffness: &StiffnessMatrix) -> f64 {
        (0..self.k())
            .map(|i| {
                let col = self.phi.column(i);
                let bphi = stiffness.matrix.mul_vec(col.as_slice());
                bphi.iter()
                    .enumerate()
                    .map(|(r, b)| {
                        let d = b - self.eigenvalues[i] * self.mass.diag[r] * col[r];
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_operators, shapes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob_basis(k: usize) -> SpectralBasis {
        let mesh = shapes::bumpy_blob(1, 0.2, 2);
        let (mass, stiff) = assemble_operators(&mesh).unwrap();
        eigendecompose(&stiff, &mass, k, EigenSolver::Dense, 0).unwrap()
    }

    #[test]
    fn project_eigenfunction_gives_unit_vector() {
        let basis = blob_basis(10);
        let f: Vec<f64> = basis.phi.column(2).iter().copied().collect();
        let a = basis.project(&f).unwrap();
        for (i, v) in a.iter().enumerate() {
            let target = if i == 2 { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-10);
        }
        let zero = basis.project(&vec![0.0; basis.n()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_is_a_contraction_in_a_norm() {
        let basis = blob_basis(12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..basis.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rec = basis.reconstruct(&basis.project(&f).unwrap()).unwrap();
        let norm_a = |g: &[f64]| basis.mass.inner(g, g).sqrt();
        assert!(norm_a(rec.as_slice()) <= norm_a(&f));
        // Dense least-squares oracle in the A-inner product: minimize ‖A^{1/2}(Φ a − f)‖.
        let sqrt_a: Vec<f64> = basis.mass.diag.iter().map(|a| a.sqrt()).collect();
        let weighted = DMatrix::from_fn(basis.n(), basis.k(), |i, j| sqrt_a[i] * basis.phi[(i, j)]);
        let rhs = DVector::from_fn(basis.n(), |i, _| sqrt_a[i] * f[i]);
        let ls = weighted.svd(true, true).solve(&rhs, 1e-14).unwrap();
        let proj = basis.project(&f).unwrap();
        assert!((ls - proj).norm() < 1e-9);
    }

    #[test]
    fn embed_identity_and_rows() {
        let basis = blob_basis(6);
        let id = DMatrix::identity(6, 6);
        assert_eq!(basis.embed(&id).unwrap(), basis.phi);
        assert!(basis.embed(&DMatrix::zeros(6, 6)).unwrap().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let e = basis.embed(&c).unwrap();
        for i in 0..basis.n() {
            for r in 0..4 {
                let direct: f64 = (0..6).map(|j| c[(r, j)] * basis.phi[(i, j)]).sum();
                assert!((e[(i, r)] - direct).abs() < 1e-12);
            }
        }
        assert!(basis.embed(&DMatrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn project_rejects_wrong_length() {
        let basis = blob_basis(4);
        assert!(matches!(basis.project(&[1.0]), Err(Error::Dimension(_))));
    }
}
