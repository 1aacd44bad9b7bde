use super::*;
use crate::mesh::{assemble_operators, shapes, Mesh};
use crate::spectral::{eigendecompose, EigenSolver};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn basis_of(mesh: &Mesh, k: usize) -> SpectralBasis {
    let (mass, stiff) = assemble_operators(mesh).unwrap();
    eigendecompose(&stiff, &mass, k, EigenSolver::Dense, 0).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn descriptor_objective(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lm: &[f64],
    ln: &[f64],
    lambda: f64,
) -> f64 {
    let data = (a - c * b).norm_squared();
    let mut reg = 0.0;
    for i in 0..c.nrows() {
        for j in 0..c.ncols() {
            reg += (c[(i, j)] * (ln[j] - lm[i])).powi(2);
        }
    }
    data + lambda * reg
}

#[test]
fn descriptor_solve_recovers_identity_on_self_pair() {
    let basis = basis_of(&shapes::bumpy_blob(2, 0.2, 1), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = random_matrix(&mut rng, basis.n(), 30);
    let c = solve_fmap_descriptors(&basis, &basis, &d, &d, 0.0).unwrap();
    assert!((c.c - DMatrix::identity(12, 12)).abs().max() < 1e-8);
}

#[test]
fn descriptor_solve_rank_deficient_without_regularization() {
    let basis = basis_of(&shapes::bumpy_blob(1, 0.2, 1), 10);
    let d = DMatrix::from_element(basis.n(), 3, 1.0);
    match solve_fmap_descriptors(&basis, &basis, &d, &d, 0.0) {
        Err(Error::Singular(msg)) => assert!(msg.contains("positive regularization")),
        other => panic!("expected singular system, got {other:?}"),
    }
}

#[test]
fn strong_regularization_suppresses_off_spectrum_entries() {
    let bm = basis_of(&shapes::bumpy_blob(2, 0.2, 1), 10);
    let bn = basis_of(&shapes::bumpy_blob(2, 0.3, 2).scaled(1.3), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dm = random_matrix(&mut rng, bm.n(), 20);
    let dn = random_matrix(&mut rng, bn.n(), 20);
    let c = solve_fmap_descriptors(&bm, &bn, &dm, &dn, 1e12).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            if (bm.eigenvalues[i] - bn.eigenvalues[j]).abs() > 1e-3 {
                assert!(c.c[(i, j)].abs() < 1e-6, "entry ({i}, {j}) = {}", c.c[(i, j)]);
            }
        }
    }
}

#[test]
fn descriptor_solve_matches_dense_oracle_and_is_locally_optimal() {
    let bm = basis_of(&shapes::bumpy_blob(1, 0.2, 3), 6);
    let bn = basis_of(&shapes::bumpy_blob(1, 0.25, 4), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dm = random_matrix(&mut rng, bm.n(), 4);
    let dn = random_matrix(&mut rng, bn.n(), 4);
    let lambda = 0.3;
    let c = solve_fmap_descriptors(&bm, &bn, &dm, &dn, lambda).unwrap().c;

    // Stacked least squares over vec(C), row-major unknown index i·k_N + j.
    let a = bm.project_matrix(&dm).unwrap();
    let b = bn.project_matrix(&dn).unwrap();
    let (km, kn, d) = (6, 5, 4);
    let rows = km * d + km * kn;
    let mut design = DMatrix::zeros(rows, km * kn);
    let mut rhs = DVector::zeros(rows);
    for i in 0..km {
        for t in 0..d {
            let r = i * d + t;
            for j in 0..kn {
                design[(r, i * kn + j)] = b[(j, t)];
            }
            rhs[r] = a[(i, t)];
        }
    }
    for i in 0..km {
        for j in 0..kn {
            let r = km * d + i * kn + j;
            design[(r, i * kn + j)] = lambda.sqrt() * (bn.eigenvalues[j] - bm.eigenvalues[i]);
        }
    }
    let x = design.svd(true, true).solve(&rhs, 1e-14).unwrap();
    for i in 0..km {
        for j in 0..kn {
            assert!((x[i * kn + j] - c[(i, j)]).abs() < 1e-8);
        }
    }

    let best = descriptor_objective(&c, &a, &b, &bm.eigenvalues, &bn.eigenvalues, lambda);
    for _ in 0..100 {
        let p = &c + random_matrix(&mut rng, km, kn) * 1e-3;
        assert!(descriptor_objective(&p, &a, &b, &bm.eigenvalues, &bn.eigenvalues, lambda) >= best);
    }
}

#[test]
fn identity_map_gives_identity_fmap() {
    let basis = basis_of(&shapes::bumpy_blob(2, 0.2, 5), 15);
    let id: Vec<usize> = (0..basis.n()).collect();
    let c = fmap_from_p2p(&PointwiseMap::Hard(id), &basis, &basis).unwrap();
    assert!((c.c - DMatrix::identity(15, 15)).abs().max() < 1e-8);
}

#[test]
fn uniform_soft_map_has_constant_image() {
    let bm = basis_of(&shapes::bumpy_blob(1, 0.2, 5), 8);
    let bn = basis_of(&shapes::bumpy_blob(1, 0.3, 6), 7);
    let (nm, nn) = (bm.n(), bn.n());
    let uniform = PointwiseMap::Soft(DMatrix::from_element(nm, nn, 1.0 / nn as f64));
    let c = fmap_from_p2p(&uniform, &bm, &bn).unwrap().c;
    // Dense oracle: Φ_Mᵀ A_M (1/n_N) 1 1ᵀ Φ_N.
    let mut oracle = DMatrix::zeros(8, 7);
    for i in 0..8 {
        let mass_i: f64 = (0..nm).map(|v| bm.mass.diag[v] * bm.phi[(v, i)]).sum();
        for j in 0..7 {
            let mean_j: f64 = (0..nn).map(|v| bn.phi[(v, j)]).sum::<f64>() / nn as f64;
            oracle[(i, j)] = mass_i * mean_j;
        }
    }
    assert!((&c - &oracle).abs().max() < 1e-12);
    // The image of every function is constant on M: only the first row survives.
    assert!(c.rows(1, 7).abs().max() < 1e-10);
    assert!(c.row(0).norm() > 1e-3);
}

#[test]
fn ground_truth_permutation_gives_orthogonal_map() {
    let mesh = shapes::bumpy_blob(2, 0.3, 7);
    let perm = shapes::random_permutation(mesh.n_vertices(), 8);
    let moved = mesh.permuted(&perm).unwrap();
    let (bm, bn) = (basis_of(&moved, 20), basis_of(&mesh, 20));
    let c = fmap_from_p2p(&PointwiseMap::Hard(perm.clone()), &bm, &bn).unwrap();
    assert!((&c.c * c.c.transpose() - DMatrix::identity(20, 20)).abs().max() < 1e-6);

    // Round trip back to the permutation.
    check_distinct_rows(&bm.phi, 1e-9).unwrap();
    assert_eq!(p2p_from_fmap(&c, &bm, &bn).unwrap(), perm);
}

#[test]
fn refinement_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c_pi = FunctionalMap::new(random_matrix(&mut rng, 6, 5));
    let lm: Vec<f64> = (0..6).map(|i| i as f64 * 0.7).collect();
    let ln: Vec<f64> = (0..5).map(|i| i as f64 * 0.9).collect();
    let all_pass = FilterBank::all_pass();
    let out = filter_refine_fmap(&c_pi, &all_pass.eval(&lm).unwrap(), &all_pass.eval(&ln).unwrap()).unwrap();
    assert!((&out.c - &c_pi.c).abs().max() < 1e-15);

    let bank = FilterBank::Meyer { scales: 2, lambda_max: None };
    let r = bank.eval(&lm).unwrap();
    let id = filter_refine_fmap(&FunctionalMap::identity(6), &r, &r).unwrap();
    assert!((id.c - DMatrix::identity(6, 6)).abs().max() < 1e-14);

    // Single heat channel: e^{−t(λ_i+λ_j)} / e^{−2tλ_j}.
    let t = 0.4;
    let heat = FilterBank::Heat { times: vec![t] };
    let out = filter_refine_fmap(&c_pi, &heat.eval(&lm).unwrap(), &heat.eval(&ln).unwrap()).unwrap();
    for i in 0..6 {
        for j in 0..5 {
            let w = (-t * (lm[i] + ln[j])).exp() / (-2.0 * t * ln[j]).exp();
            assert!((out.c[(i, j)] - w * c_pi.c[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn refinement_rejects_inconsistent_bank() {
    let c = FunctionalMap::identity(3);
    let dead = FilterResponse::from_values(DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]));
    match filter_refine_fmap(&c, &dead, &dead) {
        Err(Error::Consistency { index, .. }) => assert_eq!(index, 2),
        other => panic!("expected consistency error, got {other:?}"),
    }
}

/// Least-squares minimizer of `Σ_s ‖C h_s(Λ_N) − h_s(Λ_M) C^Π‖²` via dense normal equations.
fn stacked_oracle(c_pi: &DMatrix<f64>, hm: &DMatrix<f64>, hn: &DMatrix<f64>) -> DMatrix<f64> {
    let (km, kn) = c_pi.shape();
    let s_count = hm.nrows();
    let unknowns = km * kn;
    let mut design = DMatrix::zeros(s_count * unknowns, unknowns);
    let mut rhs = DVector::zeros(s_count * unknowns);
    for s in 0..s_count {
        for i in 0..km {
            for j in 0..kn {
                let r = s * unknowns + i * kn + j;
                design[(r, i * kn + j)] = hn[(s, j)];
                rhs[r] = hm[(s, i)] * c_pi[(i, j)];
            }
        }
    }
    let normal = design.transpose() * &design;
    let x = normal.cholesky().unwrap().solve(&(design.transpose() * rhs));
    DMatrix::from_fn(km, kn, |i, j| x[i * kn + j])
}

#[test]
fn closed_form_matches_least_squares_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let (km, kn, s) = (rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..4));
        let c_pi = random_matrix(&mut rng, km, kn);
        let hm = random_matrix(&mut rng, s, km);
        let hn = random_matrix(&mut rng, s, kn).map(|v| v + 1.5);
        let out = filter_refine_fmap(
            &FunctionalMap::new(c_pi.clone()),
            &FilterResponse::from_values(hm.clone()),
            &FilterResponse::from_values(hn.clone()),
        )
        .unwrap();
        assert!((out.c - stacked_oracle(&c_pi, &hm, &hn)).norm() < 1e-8);
    }
}

#[test]
fn p2p_from_fmap_identity_and_scan() {
    let basis = basis_of(&shapes::bumpy_blob(2, 0.2, 9), 12);
    check_distinct_rows(&basis.phi, 1e-9).unwrap();
    let id: Vec<usize> = (0..basis.n()).collect();
    assert_eq!(p2p_from_fmap(&FunctionalMap::identity(12), &basis, &basis).unwrap(), id);

    let other = basis_of(&shapes::bumpy_blob(2, 0.3, 10), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = FunctionalMap::new(random_matrix(&mut rng, 12, 10));
    let got = p2p_from_fmap(&c, &basis, &other).unwrap();
    let emb = &other.phi * c.c.transpose();
    for (i, &g) in got.iter().enumerate() {
        let dist = |j: usize| (basis.phi.row(i) - emb.row(j)).norm_squared();
        let best = (0..other.n()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
        assert_eq!(g, best);
    }
    assert!(p2p_from_fmap(&FunctionalMap::identity(5), &basis, &other).is_err());
}

#[test]
fn softmax_example_and_limits() {
    let id = DMatrix::identity(2, 2);
    let PointwiseMap::Soft(p) = soft_p2p(&id, &id, 1.0).unwrap() else { unreachable!() };
    assert!((p[(0, 0)] - 0.7311).abs() < 1e-4 && (p[(0, 1)] - 0.2689).abs() < 1e-4);
    assert!((p[(1, 1)] - 0.7311).abs() < 1e-4);
    assert!(soft_p2p(&id, &id, 0.0).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dm = random_matrix(&mut rng, 30, 4);
    let dn = random_matrix(&mut rng, 25, 4);
    let PointwiseMap::Soft(cold) = soft_p2p(&dm, &dn, 1e-4).unwrap() else { unreachable!() };
    let scores = &dm * dn.transpose();
    for i in 0..30 {
        let argmax = scores.row(i).transpose().argmax().0;
        assert!((cold[(i, argmax)] - 1.0).abs() < 1e-6);
    }
    let f = random_matrix(&mut rng, 25, 3);
    let PointwiseMap::Soft(warm) = soft_p2p(&dm, &dn, 0.07).unwrap() else { unreachable!() };
    let streamed = soft_apply(&dm, &dn, 0.07, &f).unwrap();
    assert!((streamed - &warm * &f).abs().max() < 1e-12);
}

#[test]
fn features_crossing_map() {
    let dm = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let dn = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
    assert_eq!(p2p_from_features(&dm, &dn).unwrap(), vec![1, 0]);
    assert_eq!(p2p_from_features(&dm, &dm).unwrap(), vec![0, 1]);
    assert!(p2p_from_features(&dm, &DMatrix::zeros(2, 2)).is_err());
}

/// Straightforward ZoomOut: project, convert back, grow the truncation.
fn reference_zoomout(
    init: &[usize],
    ks: &[usize],
    bm: &SpectralBasis,
    bn: &SpectralBasis,
) -> (Vec<DMatrix<f64>>, Vec<usize>) {
    let mut p2p = init.to_vec();
    let mut maps = Vec::new();
    for &k in ks {
        let phi_m = bm.phi.columns(0, k);
        let phi_n = bn.phi.columns(0, k);
        let mut c = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                c[(i, j)] = (0..bm.n())
                    .map(|v| phi_m[(v, i)] * bm.mass.diag[v] * phi_n[(p2p[v], j)])
                    .sum();
            }
        }
        let emb = phi_n * c.transpose();
        p2p = (0..bm.n())
            .map(|v| {
                let mut best = (f64::INFINITY, 0);
                for u in 0..bn.n() {
                    let d = (phi_m.row(v) - emb.row(u)).norm_squared();
                    if d < best.0 {
                        best = (d, u);
                    }
                }
                best.1
            })
            .collect();
        maps.push(c);
    }
    (maps, p2p)
}

#[test]
fn ideal_schedule_is_zoomout() {
    let (src, dst) = shapes::bent_pair(2, 0.8, 3);
    let (bm, bn) = (basis_of(&src, 30), basis_of(&dst, 30));
    let init = p2p_from_fmap(&FunctionalMap::identity(6), &bm.truncated(6).unwrap(), &bn.truncated(6).unwrap()).unwrap();
    let schedule = zoomout_schedule(10, 5, 30).unwrap();
    let ks: Vec<usize> = (10..=30).step_by(5).collect();
    let out = iterative_refine(&init, &schedule, &bm, &bn).unwrap();
    let (maps, p2p) = reference_zoomout(&init, &ks, &bm, &bn);
    for (got, want) in out.history.iter().zip(&maps) {
        assert!((&got.c - want).norm() < 1e-9);
    }
    assert_eq!(out.p2p, p2p);
}

#[test]
fn single_all_pass_step_and_fixed_point() {
    let basis = basis_of(&shapes::bumpy_blob(2, 0.2, 12), 15);
    let id: Vec<usize> = (0..basis.n()).collect();
    let out = iterative_refine(&id, &[ScheduleStep::Bank(FilterBank::all_pass())], &basis, &basis).unwrap();
    let direct = fmap_from_p2p(&PointwiseMap::Hard(id.clone()), &basis, &basis).unwrap();
    assert_eq!(out.history.len(), 1);
    assert!((&out.fmap.c - &direct.c).abs().max() < 1e-15);
    assert_eq!(out.p2p, id);
    let meyer = ScheduleStep::Bank(FilterBank::Meyer { scales: 3, lambda_max: None });
    assert_eq!(iterative_refine(&id, &[meyer.clone(), meyer], &basis, &basis).unwrap().p2p, id);
}

#[test]
fn text_formats_round_trip() {
    let p2p = vec![3, 0, 2];
    assert_eq!(correspondence_to_text(&p2p, true), "4\n1\n3\n");
    assert_eq!(parse_correspondence("4\n1\n3\n", true).unwrap(), p2p);
    assert!(parse_correspondence("0\n", true).is_err());
    assert!(parse_correspondence("x\n", false).is_err());
    let c = FunctionalMap::new(DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-20, 0.0, 3.25, 7.0]));
    assert_eq!(FunctionalMap::from_text(&c.to_text()).unwrap(), c);
    assert!(FunctionalMap::from_text("1 2\n3\n").is_err());
}

proptest! {
    #[test]
    fn closed_form_is_stationary(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (km, kn, s) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..4));
        let c_pi = random_matrix(&mut rng, km, kn);
        let hm = random_matrix(&mut rng, s, km);
        let hn = random_matrix(&mut rng, s, kn).map(|v| v + 1.5);
        let out = filter_refine_fmap(
            &FunctionalMap::new(c_pi.clone()),
            &FilterResponse::from_values(hm.clone()),
            &FilterResponse::from_values(hn.clone()),
        ).unwrap();
        let objective = |c: &DMatrix<f64>| -> f64 {
            (0..s).map(|t| {
                DMatrix::from_fn(km, kn, |i, j| c[(i, j)] * hn[(t, j)] - hm[(t, i)] * c_pi[(i, j)]).norm_squared()
            }).sum()
        };
        let best = objective(&out.c);
        let p = &out.c + random_matrix(&mut rng, km, kn) * 1e-4;
        prop_assert!(objective(&p) >= best - 1e-14);
    }
}
