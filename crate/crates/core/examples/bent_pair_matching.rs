//! Matches a procedurally bent shape pair with every mode and compares the mean
//! geodesic error against the descriptor nearest-neighbour baseline.
//!
//! cargo run --release --example bent_pair_matching -- [subdivisions] [k] [key=value ...]

use std::time::Instant;

use specmatch::config::{Config, Mode, Profile};
use specmatch::eval::GroundTruth;
use specmatch::mesh::shapes;
use specmatch::pipeline::{evaluate, match_shapes, prepare_shape};

fn main() -> specmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let subdivisions: usize = args.next().map_or(3, |s| s.parse().expect("subdivisions"));
    let k: usize = args.next().map_or(50, |s| s.parse().expect("k"));

    let (src, dst) = shapes::bent_pair(subdivisions, 1.2, 7);
    // Shuffle the target so that index order carries no information.
    let perm = shapes::random_permutation(dst.n_vertices(), 11);
    let dst = dst.permuted(&perm)?;
    let mut gt = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        gt[old] = new;
    }
    let gt = GroundTruth::new(gt, dst.n_vertices())?;

    let mut config = Config::for_profile(Profile::Desk);
    config.k = k;
    for pair in args {
        let (key, value) = pair.split_once('=').expect("key=value");
        config.set(key, value)?;
    }
    let t = Instant::now();
    let m = prepare_shape(src, &config)?;
    let n = prepare_shape(dst, &config)?;
    println!("{} vertices per shape, k = {k}, setup {:.1}s", m.n(), t.elapsed().as_secs_f64());

    for mode in Mode::ALL {
        config.mode = mode;
        let t = Instant::now();
        let result = match_shapes(&m, &n, &config)?;
        let ev = evaluate(&m, &n, &result, &gt, &config)?;
        println!(
            "{:<11} error x100 {:7.3}  baseline {:7.3}  ratio {:.3}  ({:.1}s)",
            mode.name(),
            ev.result.mean_x100(),
            ev.baseline.mean_x100(),
            ev.ratio(),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
