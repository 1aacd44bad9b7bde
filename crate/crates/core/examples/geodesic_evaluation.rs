//! Mean geodesic error and cumulative error curve of a deliberately perturbed
//! map, written as a text report, CSV and SVG.
//!
//! cargo run --release --example geodesic_evaluation -- [out_dir]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specmatch::eval::{mean_geodesic_error, GeodesicCache, GroundTruth};
use specmatch::mesh::{geodesic_diameter, shapes};

fn main() -> specmatch::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "evaluation".into());
    let mesh = shapes::bumpy_blob(3, 0.2, 3);
    let n = mesh.n_vertices();
    let adjacency = mesh.adjacency();

    // Move a third of the vertices to a random neighbour and a few far away.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pred: Vec<usize> = (0..n)
        .map(|i| match rng.random_range(0..30) {
            0 => rng.random_range(0..n),
            1..=10 => adjacency[i][rng.random_range(0..adjacency[i].len())],
            _ => i,
        })
        .collect();

    let cache = GeodesicCache::new(&mesh, None)?;
    let diameter = geodesic_diameter(&mesh, 64, 0)?;
    let report = mean_geodesic_error(&pred, &GroundTruth::identity(n), &cache, diameter)?;
    print!("{}", report.to_text());
    std::fs::create_dir_all(&dir).map_err(|source| specmatch::Error::Io { path: dir.clone().into(), source })?;
    report.write(&dir, "perturbed identity")?;
    println!("wrote error_report.txt, error_curve.csv and error_curve.svg to {dir}");
    Ok(())
}
