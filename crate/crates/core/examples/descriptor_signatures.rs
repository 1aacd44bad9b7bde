//! Wave and heat kernel signatures on a bumpy blob, written as CSV, and the
//! accuracy of descriptor nearest neighbours between the blob and a bent copy.
//!
//! cargo run --release --example descriptor_signatures -- [out.csv]

use specmatch::descriptors::{hks, wks, WKS_VARIANCE_FACTOR};
use specmatch::fmap::p2p_from_features;
use specmatch::mesh::{assemble_operators, shapes, Mesh};
use specmatch::spectral::{eigendecompose, EigenSolver, SpectralBasis};

fn basis(mesh: &Mesh) -> specmatch::Result<SpectralBasis> {
    let (mass, stiffness) = assemble_operators(mesh)?;
    eigendecompose(&stiffness, &mass, 60, EigenSolver::Auto, 0)
}

fn main() -> specmatch::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "wks.csv".into());
    let (src, dst) = shapes::bent_pair(3, 0.8, 2);
    let (bm, bn) = (basis(&src)?, basis(&dst)?);

    let w = wks(&bm, 64, WKS_VARIANCE_FACTOR)?.normalized_rows();
    w.write_csv(&out)?;
    println!("wrote {} × {} WKS values to {out}", w.n(), w.dim());

    let times: Vec<f64> = [0.1, 0.3, 1.0, 3.0].iter().map(|t| t / bm.lambda_max()).collect();
    for (name, dm, dn) in [
        ("wks", w.values.clone(), wks(&bn, 64, WKS_VARIANCE_FACTOR)?.normalized_rows().values),
        ("hks", hks(&bm, &times)?.normalized_rows().values, hks(&bn, &times)?.normalized_rows().values),
    ] {
        // The bent copy keeps vertex order, so the ground truth is the identity.
        let p2p = p2p_from_features(&dm, &dn)?;
        let hits = p2p.iter().enumerate().filter(|(i, j)| i == *j).count();
        println!("{name}: {hits} of {} nearest neighbours exact", p2p.len());
    }
    Ok(())
}
