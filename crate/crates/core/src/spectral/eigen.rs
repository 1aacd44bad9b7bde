//! Generalized symmetric eigensolvers for the pencil `(B, A)` with diagonal `A`.
//!
//! Both solvers work on the symmetrized matrix `M = A^{-1/2} B A^{-1/2}` and map
//! eigenvectors back with `φ = A^{-1/2} y`. The Krylov solver applies the
//! shift-inverted operator `(M + σI)^{-1}` through an envelope Cholesky factor and
//! grows a block Krylov space with full reorthogonalization; the block size
//! handles the exact multiplicities produced by symmetric meshes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SpectralBasis;
use crate::mesh::{MassMatrix, StiffnessMatrix};
use crate::sparse::{CsrMatrix, ProfileCholesky};
use crate::{Error, Result};

/// Largest problem the dense solver is used for when the Krylov solver fails.
pub const DENSE_FALLBACK_MAX_N: usize = 3000;

const BLOCK_SIZE: usize = 8;
/// Early-exit target for `‖Bφ − λAφ‖ / ‖B‖`.
const RESIDUAL_TARGET: f64 = 1e-10;
/// Bound accepted once the Krylov space has reached its maximum dimension.
const RESIDUAL_BOUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Dense for small or nearly complete problems, Krylov otherwise.
    #[default]
    Auto,
    Dense,
    Krylov,
}

pub fn eigendecompose(
    stiffness: &StiffnessMatrix,
    mass: &MassMatrix,
    k: usize,
    solver: EigenSolver,
    seed: u64,
) -> Result<SpectralBasis> {
    let n = check_inputs(stiffness, mass, k)?;
    match solver {
        EigenSolver::Dense => eigendecompose_dense(stiffness, mass, k),
        EigenSolver::Krylov => eigendecompose_krylov(stiffness, mass, k, seed),
        EigenSolver::Auto => {
            if n <= 400 || 2 * k >= n {
                eigendecompose_dense(stiffness, mass, k)
            } else {
                match eigendecompose_krylov(stiffness, mass, k, seed) {
                    Err(Error::NoConvergence(msg)) if n <= DENSE_FALLBACK_MAX_N => {
                        log::warn!("Krylov solver failed ({msg}); using dense fallback");
                        eigendecompose_dense(stiffness, mass, k)
                    }
                    other => other,
                }
            }
        }
    }
}

fn check_inputs(stiffness: &StiffnessMatrix, mass: &MassMatrix, k: usize) -> Result<usize> {
    let n = stiffness.n();
    if mass.n() != n {
        return Err(Error::Dimension(format!(
            "stiffness is {n}×{n} but mass has {} entries",
            mass.n()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}-vertex problem"
        )));
    }
    if mass.diag.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument("mass matrix must be positive".into()));
    }
    Ok(n)
}

fn inv_sqrt_mass(mass: &MassMatrix) -> Vec<f64> {
    mass.diag.iter().map(|a| 1.0 / a.sqrt()).collect()
}

/// Full dense decomposition of the symmetrized pencil; keeps the first `k` pairs.
pub fn eigendecompose_dense(
    stiffness: &StiffnessMatrix,
    mass: &MassMatrix,
    k: usize,
) -> Result<SpectralBasis> {
    let n = check_inputs(stiffness, mass, k)?;
    let d = inv_sqrt_mass(mass);
    let mut m = stiffness.matrix.scaled_shifted(&d, 0.0).to_dense();
    // Exact symmetry for the solver.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let phi = DMatrix::from_fn(n, k, |r, c| d[r] * eig.eigenvectors[(r, order[c])]);
    Ok(finish(phi, eigenvalues, mass))
}

/// Shift-invert block Krylov solver.
pub fn eigendecompose_krylov(
    stiffness: &StiffnessMatrix,
    mass: &MassMatrix,
    k: usize,
    seed: u64,
) -> Result<SpectralBasis> {
    let n = check_inputs(stiffness, mass, k)?;
    let d = inv_sqrt_mass(mass);
    let sym = stiffness.matrix.scaled_shifted(&d, 0.0);
    let norm_b = stiffness.matrix.norm_inf().max(f64::MIN_POSITIVE);
    let sigma = 1e-4 * sym.norm_inf().max(f64::MIN_POSITIVE);
    let chol = ProfileCholesky::factor(&stiffness.matrix.scaled_shifted(&d, sigma))?;

    let p = BLOCK_SIZE.min(n);
    let max_dim = n.min(4 * k + 8 * p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_block = |rng: &mut ChaCha8Rng, count: usize| -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect()
    };

    let mut q: Vec<DVector<f64>> = Vec::with_capacity(max_dim);
    let mut w: Vec<DVector<f64>> = Vec::with_capacity(max_dim);
    let mut h = DMatrix::<f64>::zeros(0, 0);
    let mut block = random_block(&mut rng, p);
    let mut next_check = (k + p).min(max_dim);
    let mut refills = 0;
    let mut last_report = String::from("no Ritz pairs computed");

    loop {
        let mut added = 0;
        for mut v in block.drain(..) {
            if q.len() >= max_dim {
                break;
            }
            let start = v.norm();
            for _ in 0..2 {
                for qi in &q {
                    let c = qi.dot(&v);
                    v.axpy(-c, qi, 1.0);
                }
            }
            let norm = v.norm();
            if norm <= 1e-10 * start || norm == 0.0 {
                continue;
            }
            v /= norm;
            let wv = DVector::from_vec(chol.solve(v.as_slice()));
            let m = q.len();
            h = h.resize(m + 1, m + 1, 0.0);
            for (i, qi) in q.iter().enumerate() {
                let val = qi.dot(&wv);
                h[(i, m)] = val;
                h[(m, i)] = val;
            }
            h[(m, m)] = v.dot(&wv);
            q.push(v);
            w.push(wv);
            added += 1;
        }
        let m = q.len();
        if added == 0 && m < max_dim {
            refills += 1;
            if refills > 4 {
                break;
            }
            block = random_block(&mut rng, p);
            continue;
        }
        block = w[m - added..].to_vec();

        if m >= next_check || m >= max_dim {
            let (ritz, residual) = ritz_pairs(&q, &h, &sym, mass, k);
            let worst = residual.iter().copied().fold(0.0, f64::max) / norm_b;
            last_report = format!("Krylov dimension {m}, worst relative residual {worst:e}");
            log::debug!("{last_report}");
            if worst <= RESIDUAL_TARGET || (m >= max_dim && worst <= RESIDUAL_BOUND) {
                let (values, vectors) = ritz;
                let phi = DMatrix::from_fn(n, k, |r, c| d[r] * vectors[(r, c)]);
                return Ok(finish(phi, values, mass));
            }
            if m >= max_dim {
                break;
            }
            next_check = (m + (m / 4).max(2 * p)).min(max_dim);
        }
    }
    Err(Error::NoConvergence(format!(
        "{k} eigenpairs of a {n}-vertex problem: {last_report}"
    )))
}

type RitzPairs = ((Vec<f64>, DMatrix<f64>), Vec<f64>);

/// Ritz pairs for the `k` smallest eigenvalues of `M` from the projected
/// shift-inverted operator `h = Qᵀ (M + σ)^{-1} Q`, with Rayleigh-quotient
/// eigenvalues and pencil residuals `‖A^{1/2}(M y − λ y)‖`.
fn ritz_pairs(
    q: &[DVector<f64>],
    h: &DMatrix<f64>,
    sym: &CsrMatrix,
    mass: &MassMatrix,
    k: usize,
) -> RitzPairs {
    let n = q[0].len();
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = DMatrix::zeros(n, k);
    for (c, &idx) in order[..k].iter().enumerate() {
        let s = eig.eigenvectors.column(idx);
        let mut y = DVector::zeros(n);
        for (qi, &coef) in q.iter().zip(s.iter()) {
            y.axpy(coef, qi, 1.0);
        }
        let norm = y.norm();
        vectors.set_column(c, &(y / norm));
    }
    let mut values = Vec::with_capacity(k);
    let mut residual = Vec::with_capacity(k);
    for c in 0..k {
        let y = vectors.column(c);
        let my = sym.mul_vec(y.as_slice());
        let lambda: f64 = my.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let r: f64 = my
            .iter()
            .zip(y.iter())
            .zip(&mass.diag)
            .map(|((a, b), m)| {
                let e = (a - lambda * b) * m.sqrt();
                e * e
            })
            .sum::<f64>()
            .sqrt();
        // Residual of the A-normalized eigenfunction φ = A^{-1/2} y.
        values.push(lambda);
        residual.push(r);
    }
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = idx.iter().map(|&i| values[i]).collect();
    let sorted_vectors = DMatrix::from_fn(n, k, |r, c| vectors[(r, idx[c])]);
    let sorted_residual = idx.iter().map(|&i| residual[i]).collect();
    ((sorted_values, sorted_vectors), sorted_residual)
}

/// Applies the sign convention: the largest-magnitude entry of each eigenvector is
/// positive, ties broken by the lowest index.
fn finish(mut phi: DMatrix<f64>, eigenvalues: Vec<f64>, mass: &MassMatrix) -> SpectralBasis {
    for mut col in phi.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    SpectralBasis {
        phi,
        eigenvalues,
        mass: mass.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_operators, shapes, Mesh};

    fn ops(mesh: &Mesh) -> (MassMatrix, StiffnessMatrix) {
        assemble_operators(mesh).unwrap()
    }

    #[test]
    fn constant_first_eigenfunction() {
        let mesh = shapes::bumpy_blob(2, 0.2, 1);
        let (mass, stiff) = ops(&mesh);
        let basis = eigendecompose(&stiff, &mass, 8, EigenSolver::Dense, 0).unwrap();
        let c = 1.0 / mass.total().sqrt();
        for v in basis.phi.column(0).iter() {
            assert!((v - c).abs() < 1e-8);
        }
        assert!(basis.eigenvalues[0].abs() <= 1e-8 * basis.lambda_max());
        assert!(basis.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn three_vertex_chain_matches_dense_generalized_solve() {
        // Right triangle: tiny complete problem, compared with A^{-1/2} B A^{-1/2} by hand.
        let mesh = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let (mass, stiff) = ops(&mesh);
        let basis = eigendecompose(&stiff, &mass, 3, EigenSolver::Auto, 0).unwrap();
        let b = stiff.matrix.to_dense();
        let dinv = DMatrix::from_diagonal(&DVector::from_iterator(
            3,
            mass.diag.iter().map(|a| 1.0 / a.sqrt()),
        ));
        let oracle = SymmetricEigen::new(&dinv * b * &dinv);
        let mut expected: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
        expected.sort_by(f64::total_cmp);
        for (a, e) in basis.eigenvalues.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn complete_basis_reconstructs() {
        let mesh = shapes::grid(4, 3, 0.5);
        let (mass, stiff) = ops(&mesh);
        let n = mesh.n_vertices();
        let basis = eigendecompose(&stiff, &mass, n, EigenSolver::Auto, 0).unwrap();
        let f: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let rec = basis.reconstruct(&basis.project(&f).unwrap()).unwrap();
        for (a, b) in rec.iter().zip(&f) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn krylov_agrees_with_dense_on_symmetric_sphere() {
        let mesh = shapes::icosphere(3, 1.0);
        let (mass, stiff) = ops(&mesh);
        let dense = eigendecompose_dense(&stiff, &mass, 30).unwrap();
        let kry = eigendecompose_krylov(&stiff, &mass, 30, 7).unwrap();
        for (a, b) in dense.eigenvalues.iter().zip(&kry.eigenvalues) {
            assert!((a - b).abs() < 1e-8 * dense.lambda_max(), "{a} vs {b}");
        }
        assert!(kry.orthonormality_error() < 1e-8);
        assert!(kry.max_residual(&stiff) < 1e-8 * stiff.matrix.norm_inf());
    }

    #[test]
    fn rejects_bad_k() {
        let mesh = shapes::grid(3, 3, 1.0);
        let (mass, stiff) = ops(&mesh);
        assert!(eigendecompose(&stiff, &mass, 0, EigenSolver::Auto, 0).is_err());
        assert!(eigendecompose(&stiff, &mass, 10, EigenSolver::Auto, 0).is_err());
    }

    #[test]
    fn truncation_nesting() {
        let mesh = shapes::bumpy_blob(3, 0.25, 4);
        let (mass, stiff) = ops(&mesh);
        let big = eigendecompose_krylov(&stiff, &mass, 40, 1).unwrap();
        let small = eigendecompose_krylov(&stiff, &mass, 20, 2).unwrap();
        let lk = big.lambda_max();
        for i in 0..20 {
            let gap_prev = if i > 0 { big.eigenvalues[i] - big.eigenvalues[i - 1] } else { f64::INFINITY };
            let gap_next = big.eigenvalues[i + 1] - big.eigenvalues[i];
            if gap_prev.min(gap_next) < 1e-6 * lk {
                continue;
            }
            assert!((big.eigenvalues[i] - small.eigenvalues[i]).abs() < 1e-6 * lk);
            let diff = (big.phi.column(i) - small.phi.column(i)).amax();
            assert!(diff < 1e-6, "eigenvector {i} differs by {diff}");
        }
    }
}
