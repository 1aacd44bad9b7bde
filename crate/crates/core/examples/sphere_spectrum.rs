//! Laplace–Beltrami spectrum of a unit icosphere: eigenvalues cluster near
//! l(l+1) with multiplicity 2l+1, and the Krylov solver agrees with the dense one.
//!
//! cargo run --release --example sphere_spectrum -- [subdivisions] [k]

use specmatch::mesh::{assemble_operators, shapes};
use specmatch::spectral::{eigendecompose, EigenSolver};

fn main() -> specmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let subdivisions: usize = args.next().map_or(3, |s| s.parse().expect("subdivisions"));
    let k: usize = args.next().map_or(36, |s| s.parse().expect("k"));

    let mesh = shapes::icosphere(subdivisions, 1.0);
    let (mass, stiffness) = assemble_operators(&mesh)?;
    let krylov = eigendecompose(&stiffness, &mass, k, EigenSolver::Krylov, 0)?;
    let dense = eigendecompose(&stiffness, &mass, k, EigenSolver::Dense, 0)?;

    println!("{} vertices, area {:.4} (4π = {:.4})", mesh.n_vertices(), mass.total(), 4.0 * std::f64::consts::PI);
    println!("{:>3} {:>12} {:>12} {:>8}", "i", "krylov", "dense", "l(l+1)");
    let mut band = 0usize;
    for (i, (a, b)) in krylov.eigenvalues.iter().zip(&dense.eigenvalues).enumerate() {
        while (band + 1) * (band + 1) <= i {
            band += 1;
        }
        println!("{i:>3} {a:>12.6} {b:>12.6} {:>8}", band * (band + 1));
    }
    let norm = stiffness.matrix.norm_inf();
    println!(
        "max residual / ‖B‖ {:.2e}, orthonormality error {:.2e}",
        krylov.max_residual(&stiffness) / norm,
        krylov.orthonormality_error()
    );
    Ok(())
}
