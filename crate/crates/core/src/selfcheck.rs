//! Embedded oracle and invariant checks, small enough to run in a few seconds.
//!
//! Each check compares the library against an independently written oracle
//! (dense least squares, a plain ZoomOut loop, Gauss–Jacobi quadrature, finite
//! differences, the dense eigensolver) or against an exact fixed point.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::config::{Config, Mode, Profile};
use crate::filters::{jacobi_eval, FilterBank, FilterResponse, JacobiBank};
use crate::fmap::{
    fmap_from_p2p, filter_refine_fmap, iterative_refine, p2p_from_fmap, zoomout_schedule,
    FunctionalMap, PointwiseMap,
};
use crate::mesh::{assemble_operators, shapes, Mesh};
use crate::optimize::{grad_filter_params, loss_freq, total_loss, DirectionState, LossWeights, PairState};
use crate::pipeline::{match_shapes, prepare_shape};
use crate::spectral::{eigendecompose, EigenSolver, SpectralBasis};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<(bool, String)>;

const CHECKS: [(&str, fn() -> Outcome); 10] = [
    ("closed-form refinement vs dense least squares", closed_form),
    ("ideal schedule vs reference ZoomOut loop", zoomout),
    ("all-pass frequency loss is the coupling loss", coupling),
    ("Jacobi basis orthonormal under its weight", jacobi_orthonormality),
    ("Jacobi reductions and PCD evaluation paths", jacobi_reductions),
    ("Meyer bank is a tight frame", meyer_tight_frame),
    ("filter gradient vs finite differences", gradient),
    ("Krylov eigenpairs vs dense solver", eigenpairs),
    ("self-pair identity and permuted-copy recovery", exact_recovery),
    ("repeated matching is deterministic", determinism),
];

pub fn names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check; an error inside a check counts as a failure.
pub fn run_all() -> Vec<Check> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            Check {
                name,
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

pub fn report(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        out.push_str(&format!(
            "{} {:<48} {} ({:.2}s)\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail,
            c.seconds
        ));
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    out.push_str(&format!("{passed}/{} checks passed\n", checks.len()));
    out
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn basis_of(mesh: &Mesh, k: usize, solver: EigenSolver) -> Result<(SpectralBasis, crate::mesh::StiffnessMatrix)> {
    let (mass, stiffness) = assemble_operators(mesh)?;
    Ok((eigendecompose(&stiffness, &mass, k, solver, 0)?, stiffness))
}

fn verdict(worst: f64, tol: f64) -> (bool, String) {
    (worst <= tol, format!("max deviation {worst:.2e} (tolerance {tol:.0e})"))
}

fn closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (km, kn, s) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=4));
        let c_pi = random_matrix(&mut rng, km, kn);
        let hm = random_matrix(&mut rng, s, km);
        let hn = random_matrix(&mut rng, s, kn).map(|v| v + 1.5);
        let got = filter_refine_fmap(
            &FunctionalMap::new(c_pi.clone()),
            &FilterResponse::from_values(hm.clone()),
            &FilterResponse::from_values(hn.clone()),
        )?;
        // Stack every residual `C_ij h_s(λ^N_j) − h_s(λ^M_i) C^Π_ij` into one system.
        let unknowns = km * kn;
        let mut design = DMatrix::zeros(s * unknowns, unknowns);
        let mut rhs = DVector::zeros(s * unknowns);
        for ch in 0..s {
            for i in 0..km {
                for j in 0..kn {
                    let r = ch * unknowns + i * kn + j;
                    design[(r, i * kn + j)] = hn[(ch, j)];
                    rhs[r] = hm[(ch, i)] * c_pi[(i, j)];
                }
            }
        }
        let x = design
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| crate::Error::Singular(e.to_string()))?;
        let want = DMatrix::from_fn(km, kn, |i, j| x[i * kn + j]);
        worst = worst.max((got.c - want).norm());
    }
    Ok(verdict(worst, 1e-8))
}

fn zoomout() -> Outcome {
    let (src, dst) = shapes::bent_pair(2, 0.8, 3);
    let (bm, _) = basis_of(&src, 20, EigenSolver::Dense)?;
    let (bn, _) = basis_of(&dst, 20, EigenSolver::Dense)?;
    let init = p2p_from_fmap(&FunctionalMap::identity(5), &bm.truncated(5)?, &bn.truncated(5)?)?;
    let out = iterative_refine(&init, &zoomout_schedule(10, 5, 20)?, &bm, &bn)?;

    let mut p2p = init;
    let mut worst = 0.0f64;
    for (step, k) in (10..=20).step_by(5).enumerate() {
        let c = DMatrix::from_fn(k, k, |i, j| {
            (0..bm.n()).map(|v| bm.phi[(v, i)] * bm.mass.diag[v] * bn.phi[(p2p[v], j)]).sum()
        });
        let emb = bn.phi.columns(0, k) * c.transpose();
        p2p = (0..bm.n())
            .map(|v| {
                let row = bm.phi.row(v).columns(0, k).into_owned();
                (0..bn.n())
                    .min_by(|&a, &b| {
                        (&row - emb.row(a)).norm_squared().total_cmp(&(&row - emb.row(b)).norm_squared())
                    })
                    .unwrap_or(0)
            })
            .collect();
        worst = worst.max((&out.history[step].c - c).norm());
    }
    let (ok, detail) = verdict(worst, 1e-9);
    let same = out.p2p == p2p;
    Ok((ok && same, format!("{detail}; final maps {}", if same { "identical" } else { "differ" })))
}

fn coupling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (bm, _) = basis_of(&shapes::bumpy_blob(2, 0.2, 2), 10, EigenSolver::Dense)?;
    let (bn, _) = basis_of(&shapes::bumpy_blob(2, 0.3, 3), 9, EigenSolver::Dense)?;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let c = random_matrix(&mut rng, 10, 9);
        let p2p: Vec<usize> = (0..bm.n()).map(|_| rng.random_range(0..bn.n())).collect();
        let got = loss_freq(
            &FunctionalMap::new(c.clone()),
            &PointwiseMap::Hard(p2p.clone()),
            &FilterBank::all_pass(),
            &bm,
            &bn,
        )?;
        let mut want = 0.0;
        for i in 0..10 {
            for j in 0..9 {
                let c_pi: f64 = (0..bm.n()).map(|v| bm.phi[(v, i)] * bm.mass.diag[v] * bn.phi[(p2p[v], j)]).sum();
                want += (c[(i, j)] - c_pi).powi(2);
            }
        }
        worst = worst.max((got - want).abs());
    }
    Ok(verdict(worst, 1e-12))
}

/// Gauss–Jacobi nodes and weights for `(1−x)^a (1+x)^b` by Golub–Welsch.
pub fn gauss_jacobi(a: f64, b: f64, points: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = DMatrix::zeros(points, points);
    for n in 0..points {
        let nf = n as f64;
        let s = 2.0 * nf + a + b;
        t[(n, n)] = if n == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if n + 1 < points {
            let m = nf + 1.0;
            let s = 2.0 * m + a + b;
            let beta = if n == 0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + a + b).powi(2) * (3.0 + a + b))
            } else {
                4.0 * m * (m + a) * (m + b) * (m + a + b) / (s * s * (s + 1.0) * (s - 1.0))
            };
            t[(n, n + 1)] = beta.sqrt();
            t[(n + 1, n)] = beta.sqrt();
        }
    }
    let mu0 = ((a + b + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp();
    let eig = SymmetricEigen::new(t);
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..points).map(|i| mu0 * eig.eigenvectors[(0, i)].powi(2)).collect();
    (nodes, weights)
}

/// Largest `|∫ J_l J_m w − δ_lm|` for orders `0..=order`.
pub fn jacobi_gram_error(a: f64, b: f64, order: usize, points: usize) -> Result<f64> {
    let (x, w) = gauss_jacobi(a, b, points);
    let v = jacobi_eval(a, b, order, &x)?;
    let mut worst = 0.0f64;
    for l in 0..=order {
        for m in 0..=order {
            let ip: f64 = (0..points).map(|q| w[q] * v[(l, q)] * v[(m, q)]).sum();
            worst = worst.max((ip - if l == m { 1.0 } else { 0.0 }).abs());
        }
    }
    Ok(worst)
}

fn jacobi_orthonormality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (a, b) = (rng.random_range(-0.9..=2.0), rng.random_range(-0.9..=2.0));
        worst = worst.max(jacobi_gram_error(a, b, 8, 64)?);
    }
    Ok(verdict(worst, 1e-6))
}

fn jacobi_reductions() -> Outcome {
    let xs: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
    let legendre = jacobi_eval(0.0, 0.0, 8, &xs)?;
    let chebyshev = jacobi_eval(-0.5, -0.5, 8, &xs)?;
    let mut worst = 0.0f64;
    for (q, &x) in xs.iter().enumerate() {
        let (mut p0, mut p1) = (1.0, x);
        let (mut t0, mut t1) = (1.0, x);
        for l in 0..=8usize {
            let (p, t) = if l == 0 { (p0, t0) } else { (p1, t1) };
            let lf = l as f64;
            let pn = p * ((2.0 * lf + 1.0) / 2.0).sqrt();
            let tn = t * if l == 0 { 1.0 / std::f64::consts::PI.sqrt() } else { (2.0 / std::f64::consts::PI).sqrt() };
            worst = worst.max((legendre[(l, q)] - pn).abs()).max((chebyshev[(l, q)] - tn).abs());
            if l >= 1 {
                let next_p = ((2.0 * lf + 1.0) * x * p1 - lf * p0) / (lf + 1.0);
                let next_t = 2.0 * x * t1 - t0;
                (p0, p1, t0, t1) = (p1, next_p, t1, next_t);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut paths = 0.0f64;
    for _ in 0..5 {
        let mut bank = JacobiBank::zeros(4, 8, 2.0);
        bank.alpha = random_matrix(&mut rng, 4, 9);
        bank.gamma = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        bank.set_shape(rng.random_range(-0.9..2.0), rng.random_range(-0.9..2.0))?;
        paths = paths.max((bank.eval_decomposed(&xs)? - bank.eval_composed(&xs)?).abs().max());
    }
    let ok = worst <= 1e-9 && paths <= 1e-10;
    Ok((ok, format!("reductions {worst:.2e} (1e-9), evaluation paths {paths:.2e} (1e-10)")))
}

fn meyer_tight_frame() -> Outcome {
    let top = 37.5;
    let lambdas: Vec<f64> = (0..1000).map(|i| top * i as f64 / 999.0).collect();
    let mut worst = 0.0f64;
    for scales in 1..=6 {
        let r = FilterResponse::from_values(FilterBank::Meyer { scales, lambda_max: Some(top) }.values(&lambdas)?);
        worst = r.g.iter().fold(worst, |w, g| w.max((g - 1.0).abs()));
    }
    Ok(verdict(worst, 1e-6))
}

fn gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let (km, kn) = (rng.random_range(3..8), rng.random_range(3..8));
        let spectrum = |rng: &mut ChaCha8Rng, k: usize| {
            let mut l: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
            l.sort_by(f64::total_cmp);
            l[0] = 0.0;
            l
        };
        let (lm, ln) = (spectrum(&mut rng, km), spectrum(&mut rng, kn));
        let direction = |rng: &mut ChaCha8Rng, r: usize, c: usize| DirectionState {
            c: random_matrix(rng, r, c),
            c_pi: random_matrix(rng, r, c),
            smooth: rng.random_range(0.0..1.0),
        };
        let state = PairState {
            forward: direction(&mut rng, km, kn),
            backward: direction(&mut rng, kn, km),
            bidirectional: true,
        };
        let mut bank = JacobiBank::zeros(3, 5, 2.0);
        bank.alpha = random_matrix(&mut rng, 3, 6);
        bank.gamma = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
        bank.set_shape(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5))?;
        let weights = LossWeights::default();
        let (_, grad) = grad_filter_params(&state, &FilterBank::Jacobi(bank.clone()), &lm, &ln, weights)?;
        let g = grad.flatten();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let p = bank.params();
        for i in 0..p.len() {
            let at = |delta: f64| -> Result<f64> {
                let mut q = p.clone();
                q[i] += delta;
                let mut b = bank.clone();
                b.set_params(&q)?;
                Ok(total_loss(&state, &FilterBank::Jacobi(b), &lm, &ln, weights)?.total)
            };
            let h = 1e-5;
            let fd = (at(h)? - at(-h)?) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-6 * scale);
            worst = worst.max((fd - g[i]).abs() / denom);
        }
    }
    Ok(verdict(worst, 1e-4))
}

fn eigenpairs() -> Outcome {
    let mesh = shapes::bumpy_blob(3, 0.2, 8);
    let (krylov, stiffness) = basis_of(&mesh, 30, EigenSolver::Krylov)?;
    let (dense, _) = basis_of(&mesh, 30, EigenSolver::Dense)?;
    let norm = stiffness.matrix.norm_inf();
    let residual = krylov.max_residual(&stiffness) / norm;
    let ortho = krylov.orthonormality_error();
    let values = krylov
        .eigenvalues
        .iter()
        .zip(&dense.eigenvalues)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    let ok = residual <= 1e-8 && ortho <= 1e-8 && values <= 1e-8;
    Ok((ok, format!("residual/‖B‖ {residual:.1e}, orthonormality {ortho:.1e}, eigenvalues {values:.1e}")))
}

fn small_config(mode: Mode) -> Config {
    let mut c = Config::for_profile(Profile::Desk);
    c.mode = mode;
    c.k = 20;
    c.wks_dim = 32;
    c.zoomout_start = 10;
    c.zoomout_step = 5;
    c.max_iterations = 40;
    c.inner_steps = 10;
    c.refine_iterations = 3;
    c
}

fn exact_recovery() -> Outcome {
    let mesh = shapes::bumpy_blob(2, 0.25, 21);
    let config = small_config(Mode::JacobiOpt);
    let shape = prepare_shape(mesh.clone(), &config)?;
    let id: Vec<usize> = (0..shape.n()).collect();
    let mut failures = Vec::new();
    for mode in Mode::ALL {
        let r = match_shapes(&shape, &shape, &small_config(mode))?;
        if r.p2p != id {
            failures.push(mode.name());
        }
    }
    let perm = shapes::random_permutation(mesh.n_vertices(), 4);
    let permuted = prepare_shape(mesh.permuted(&perm)?, &config)?;
    let r = match_shapes(&shape, &permuted, &config)?;
    let mut want = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        want[old] = new;
    }
    if r.p2p != want {
        failures.push("permuted copy");
    }
    let c = fmap_from_p2p(&PointwiseMap::Hard(id), &shape.basis, &shape.basis)?;
    let bank = FilterBank::Jacobi(JacobiBank::heat_initialized(6, 8, 2.0)?);
    let freq = loss_freq(&c, &PointwiseMap::Hard((0..shape.n()).collect()), &bank, &shape.basis, &shape.basis)?;
    if freq > 1e-16 {
        failures.push("self-pair frequency loss");
    }
    Ok(if failures.is_empty() {
        (true, format!("identity in all {} modes, permutation recovered", Mode::ALL.len()))
    } else {
        (false, format!("failed: {}", failures.join(", ")))
    })
}

fn determinism() -> Outcome {
    let (src, dst) = shapes::bent_pair(2, 0.6, 5);
    let config = small_config(Mode::JacobiOpt);
    let m = prepare_shape(src, &config)?;
    let n = prepare_shape(dst, &config)?;
    let a = match_shapes(&m, &n, &config)?;
    let b = match_shapes(&m, &n, &config)?;
    let same = a.p2p == b.p2p && a.bank == b.bank;
    Ok((same, if same { "identical maps and banks".into() } else { "runs differ".into() }))
}
