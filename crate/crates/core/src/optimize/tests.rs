use super::*;
use crate::descriptors::{wks, WKS_VARIANCE_FACTOR};
use crate::filters::FilterResponse;
use crate::mesh::{assemble_operators, shapes, Mesh};
use crate::spectral::{eigendecompose, EigenSolver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Shape {
    mesh: Mesh,
    basis: SpectralBasis,
    stiffness: StiffnessMatrix,
    desc: DMatrix<f64>,
    coords: DMatrix<f64>,
}

fn shape(mesh: Mesh, k: usize) -> Shape {
    let (mass, stiffness) = assemble_operators(&mesh).unwrap();
    let basis = eigendecompose(&stiffness, &mass, k, EigenSolver::Dense, 0).unwrap();
    let desc = wks(&basis, 32, WKS_VARIANCE_FACTOR).unwrap().normalized_rows().values;
    let coords = mesh.vertex_matrix();
    Shape {
        mesh,
        basis,
        stiffness,
        desc,
        coords,
    }
}

fn pair<'a>(m: &'a Shape, n: &'a Shape) -> PairData<'a> {
    PairData {
        basis_m: &m.basis,
        basis_n: &n.basis,
        desc_m: &m.desc,
        desc_n: &n.desc,
        stiffness_m: &m.stiffness,
        stiffness_n: &n.stiffness,
        coords_m: &m.coords,
        coords_n: &n.coords,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_bank(rng: &mut ChaCha8Rng, s: usize, order: usize) -> JacobiBank {
    let mut bank = JacobiBank::zeros(s, order, 2.0);
    bank.alpha = random_matrix(rng, s, order + 1);
    bank.gamma = (0..order).map(|_| rng.random_range(-1.5..1.5)).collect();
    bank.set_shape(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)).unwrap();
    bank
}

fn random_spectrum(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut l: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
    l.sort_by(f64::total_cmp);
    l[0] = 0.0;
    l
}

fn random_state(rng: &mut ChaCha8Rng, km: usize, kn: usize) -> PairState {
    PairState {
        forward: DirectionState {
            c: random_matrix(rng, km, kn),
            c_pi: random_matrix(rng, km, kn),
            smooth: rng.random_range(0.0..1.0),
        },
        backward: DirectionState {
            c: random_matrix(rng, kn, km),
            c_pi: random_matrix(rng, kn, km),
            smooth: rng.random_range(0.0..1.0),
        },
        bidirectional: true,
    }
}

#[test]
fn freq_vanishes_on_self_pair_identity() {
    let s = shape(shapes::bumpy_blob(2, 0.2, 1), 12);
    let id = PointwiseMap::Hard((0..s.basis.n()).collect());
    let c = FunctionalMap::identity(12);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for bank in [
        FilterBank::Jacobi(JacobiBank::heat_initialized(4, 6, 2.0).unwrap()),
        FilterBank::Jacobi(random_bank(&mut rng, 3, 5)),
        FilterBank::Meyer { scales: 3, lambda_max: None },
    ] {
        assert!(loss_freq(&c, &id, &bank, &s.basis, &s.basis).unwrap() < 1e-16);
    }
}

#[test]
fn all_pass_freq_is_coupling_loss() {
    let m = shape(shapes::bumpy_blob(2, 0.2, 2), 10);
    let n = shape(shapes::bumpy_blob(2, 0.3, 3), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = FunctionalMap::new(random_matrix(&mut rng, 10, 9));
    let pi = PointwiseMap::Hard((0..m.basis.n()).map(|_| rng.random_range(0..n.basis.n())).collect());
    let loss = loss_freq(&c, &pi, &FilterBank::all_pass(), &m.basis, &n.basis).unwrap();
    let c_pi = fmap_from_p2p(&pi, &m.basis, &n.basis).unwrap();
    assert!((loss - (&c.c - &c_pi.c).norm_squared()).abs() < 1e-12);
}

#[test]
fn freq_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (km, kn, s) = (7, 5, 3);
    let c = random_matrix(&mut rng, km, kn);
    let c_pi = random_matrix(&mut rng, km, kn);
    let hm = random_matrix(&mut rng, s, km);
    let hn = random_matrix(&mut rng, s, kn);
    let got = freq_from_responses(
        &FunctionalMap::new(c.clone()),
        &FunctionalMap::new(c_pi.clone()),
        &FilterResponse::from_values(hm.clone()),
        &FilterResponse::from_values(hn.clone()),
    )
    .unwrap();
    let mut want = 0.0;
    for t in 0..s {
        for i in 0..km {
            for j in 0..kn {
                want += (c[(i, j)] * hn[(t, j)] - hm[(t, i)] * c_pi[(i, j)]).powi(2);
            }
        }
    }
    assert!((got - want).abs() < 1e-10);
}

#[test]
fn fmap_losses() {
    let id = DMatrix::<f64>::identity(5, 5);
    assert_eq!(loss_fmap(&id, &id).unwrap(), (0.0, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = random_matrix(&mut rng, 5, 5).qr().q();
    let (bi, or) = loss_fmap(&q, &q.transpose()).unwrap();
    assert!(bi < 1e-24 && or < 1e-24);

    let a = random_matrix(&mut rng, 4, 6);
    let b = random_matrix(&mut rng, 6, 4);
    let (bi, or) = loss_fmap(&a, &b).unwrap();
    let (mut want_bi, mut want_or) = (0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            let delta = if i == j { 1.0 } else { 0.0 };
            let ab: f64 = (0..6).map(|t| a[(i, t)] * b[(t, j)]).sum();
            let aat: f64 = (0..6).map(|t| a[(i, t)] * a[(j, t)]).sum();
            want_bi += (ab - delta).powi(2);
            want_or += (aat - delta).powi(2);
        }
    }
    assert!((bi - want_bi).abs() < 1e-12 && (or - want_or).abs() < 1e-12);
    assert!(loss_fmap(&a, &a).is_err());
}

#[test]
fn smoothness_energy() {
    let m = shape(shapes::bumpy_blob(2, 0.2, 4), 6);
    let n = m.basis.n();
    let collapse = PointwiseMap::Hard(vec![7; n]);
    let e = loss_smooth(&collapse, &m.coords, &m.stiffness).unwrap();
    assert!(e.abs() < 1e-12);

    let id = PointwiseMap::Hard((0..n).collect());
    let direct: f64 = (0..3)
        .map(|c| {
            let col: Vec<f64> = m.coords.column(c).iter().copied().collect();
            m.stiffness.matrix.quad_form(&col)
        })
        .sum();
    let e = loss_smooth(&id, &m.coords, &m.stiffness).unwrap();
    assert!(e > 0.0 && (e - direct).abs() < 1e-12 * direct);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
    let soft = DMatrix::from_fn(n, n, |i, j| raw[(i, j)] / raw.row(i).sum());
    assert!(loss_smooth(&PointwiseMap::Soft(soft), &m.coords, &m.stiffness).unwrap() >= -1e-12);
    assert!(loss_smooth(&id, &DMatrix::zeros(3, 3), &m.stiffness).is_err());
}

#[test]
fn total_loss_on_self_pair_identity() {
    let m = shape(shapes::bumpy_blob(2, 0.2, 6), 10);
    let data = pair(&m, &m);
    let id: Vec<usize> = (0..m.basis.n()).collect();
    let c = DMatrix::identity(10, 10);
    let state = pair_state(&data, &c, &c, LossMap::Hard(&id, &id), true).unwrap();
    let bank = FilterBank::Jacobi(JacobiBank::heat_initialized(6, 8, 2.0).unwrap());
    let weights = LossWeights::non_isometric();
    let loss = total_loss(&state, &bank, &m.basis.eigenvalues, &m.basis.eigenvalues, weights).unwrap();
    let energy = loss_smooth(&PointwiseMap::Hard(id.clone()), &m.coords, &m.stiffness).unwrap();
    assert!(loss.freq < 1e-20 && loss.bi < 1e-14 && loss.or < 1e-14);
    assert_eq!(loss.barrier, 0.0);
    assert!((loss.total - 5.0 * 2.0 * energy).abs() < 1e-9 * energy);
    let zero = total_loss(&state, &bank, &m.basis.eigenvalues, &m.basis.eigenvalues, LossWeights::zero()).unwrap();
    assert_eq!(zero.total, 0.0);
}

#[test]
fn total_is_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let state = random_state(&mut rng, 6, 5);
    let bank = FilterBank::Jacobi(random_bank(&mut rng, 3, 4));
    let (lm, ln) = (random_spectrum(&mut rng, 6), random_spectrum(&mut rng, 5));
    let w = LossWeights {
        freq: 0.7,
        bi: 1.3,
        or: 0.2,
        smooth: 5.0,
        fmap: 0.5,
        barrier: 100.0,
    };
    let l = total_loss(&state, &bank, &lm, &ln, w).unwrap();
    let expected = 0.7 * l.freq + 0.5 * (1.3 * l.bi + 0.2 * l.or) + 5.0 * l.smooth + l.barrier;
    assert!((l.total - expected).abs() < 1e-12 * l.total.max(1.0));
    assert!([l.freq, l.bi, l.or, l.smooth, l.barrier].iter().all(|v| *v >= 0.0));
}

fn fd_check(state: &PairState, bank: &JacobiBank, lm: &[f64], ln: &[f64], weights: LossWeights, h: f64) {
    let fb = FilterBank::Jacobi(bank.clone());
    let (_, grad) = grad_filter_params(state, &fb, lm, ln, weights).unwrap();
    let g = grad.flatten();
    let p = bank.params();
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..p.len() {
        let eval = |delta: f64| {
            let mut q = p.clone();
            q[i] += delta;
            let mut b = bank.clone();
            b.set_params(&q).unwrap();
            total_loss(state, &FilterBank::Jacobi(b), lm, ln, weights).unwrap().total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let denom = fd.abs().max(g[i].abs()).max(1e-6 * scale);
        assert!(
            (fd - g[i]).abs() <= 1e-4 * denom,
            "component {i}: analytic {} vs finite difference {fd}",
            g[i]
        );
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let state = random_state(&mut rng, 8, 7);
        let bank = random_bank(&mut rng, 3, 6);
        let (lm, ln) = (random_spectrum(&mut rng, 8), random_spectrum(&mut rng, 7));
        fd_check(&state, &bank, &lm, &ln, LossWeights::default(), 1e-5);
    }
}

#[test]
fn barrier_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let state = random_state(&mut rng, 6, 6);
    let mut bank = random_bank(&mut rng, 2, 4);
    bank.alpha *= 1e-6;
    let (lm, ln) = (random_spectrum(&mut rng, 6), random_spectrum(&mut rng, 6));
    // Only terms of comparable size, so the small step is not swamped by rounding.
    let w = LossWeights {
        freq: 1.0,
        barrier: 1e10,
        ..LossWeights::zero()
    };
    let l = total_loss(&state, &FilterBank::Jacobi(bank.clone()), &lm, &ln, w).unwrap();
    assert!(l.barrier > 0.0);
    fd_check(&state, &bank, &lm, &ln, w, 1e-9);
}

#[test]
fn freq_gradient_vanishes_at_self_pair_identity() {
    let m = shape(shapes::bumpy_blob(2, 0.2, 10), 10);
    let data = pair(&m, &m);
    let id: Vec<usize> = (0..m.basis.n()).collect();
    let c = DMatrix::identity(10, 10);
    let state = pair_state(&data, &c, &c, LossMap::Hard(&id, &id), true).unwrap();
    let bank = FilterBank::Jacobi(JacobiBank::heat_initialized(3, 5, 2.0).unwrap());
    let freq_only = LossWeights {
        freq: 1.0,
        ..LossWeights::zero()
    };
    let (_, g) = grad_filter_params(&state, &bank, &m.basis.eigenvalues, &m.basis.eigenvalues, freq_only).unwrap();
    assert!(g.flatten().iter().all(|v| v.abs() < 1e-10));
    assert!(grad_filter_params(&state, &FilterBank::all_pass(), &[0.0, 1.0], &[0.0, 1.0], freq_only).is_err());
}

fn assert_monotone(trace: &[TraceEntry]) {
    for w in trace.windows(2) {
        assert!(w[1].loss.total <= w[0].loss.total);
    }
}

#[test]
fn self_pair_reaches_identity() {
    let m = shape(shapes::bumpy_blob(2, 0.3, 11), 20);
    let data = pair(&m, &m);
    let bank = JacobiBank::heat_initialized(6, 8, 2.0).unwrap();
    let config = OptimizerConfig {
        max_iterations: 60,
        inner_steps: 20,
        ..OptimizerConfig::default()
    };
    let out = optimize_filters(&data, &bank, &config).unwrap();
    let id: Vec<usize> = (0..m.basis.n()).collect();
    assert_eq!(out.p2p, id);
    assert!(out.trace.last().unwrap().loss.freq < 1e-12);
    assert_monotone(&out.trace);
    assert!(trace_csv(&out.trace).starts_with("iteration,freq,bi,or,smooth,total\n"));
}

#[test]
fn permuted_copy_is_recovered() {
    let base = shapes::bumpy_blob(2, 0.3, 12);
    let perm = shapes::random_permutation(base.n_vertices(), 13);
    let m = shape(base.permuted(&perm).unwrap(), 20);
    let n = shape(base, 20);
    crate::fmap::check_distinct_rows(&m.basis.phi, 1e-9).unwrap();
    let data = pair(&m, &n);
    let config = OptimizerConfig {
        max_iterations: 40,
        inner_steps: 20,
        ..OptimizerConfig::default()
    };
    let out = optimize_filters(&data, &JacobiBank::heat_initialized(6, 8, 2.0).unwrap(), &config).unwrap();
    assert_eq!(out.p2p, perm);
    assert_monotone(&out.trace);
    assert!(m.mesh.n_vertices() == perm.len());
}

#[test]
fn rejects_inadmissible_initial_bank() {
    let m = shape(shapes::bumpy_blob(1, 0.3, 14), 8);
    let data = pair(&m, &m);
    let dead = JacobiBank::zeros(2, 3, 2.0);
    assert!(matches!(
        optimize_filters(&data, &dead, &OptimizerConfig::default()),
        Err(Error::Consistency { .. })
    ));
}
