//! ZoomOut as a schedule of ideal filter banks: the spectral truncation grows
//! from `zoomout_start` to k while the geodesic error of the map drops.
//!
//! cargo run --release --example zoomout_refinement

use specmatch::config::{Config, Profile};
use specmatch::eval::{mean_geodesic_error, GeodesicCache, GroundTruth};
use specmatch::fmap::{iterative_refine, zoomout_schedule, ScheduleStep};
use specmatch::mesh::{geodesic_diameter, shapes};
use specmatch::pipeline::prepare_shape;

fn main() -> specmatch::Result<()> {
    let (src, dst) = shapes::bent_pair(3, 1.2, 7);
    let config = Config::for_profile(Profile::Desk);
    let m = prepare_shape(src, &config)?;
    let n = prepare_shape(dst, &config)?;
    let gt = GroundTruth::identity(m.n());
    let cache = GeodesicCache::new(&n.mesh, None)?;
    let diameter = geodesic_diameter(&m.mesh, 64, 0)?;

    let initial = specmatch::fmap::p2p_from_features(&m.descriptors, &n.descriptors)?;
    let err = |p2p: &[usize]| mean_geodesic_error(p2p, &gt, &cache, diameter).map(|r| r.mean_x100());
    println!("descriptor NN      error x100 {:.3}", err(&initial)?);
    let schedule = zoomout_schedule(config.zoomout_start, config.zoomout_step, config.k)?;
    let mut p2p = initial;
    for step in &schedule {
        let ScheduleStep::Ideal(k) = step else { unreachable!() };
        p2p = iterative_refine(&p2p, std::slice::from_ref(step), &m.basis, &n.basis)?.p2p;
        println!("zoomout k = {k:<4}   error x100 {:.3}", err(&p2p)?);
    }
    Ok(())
}
