//! Per-pair optimization of a Jacobi filter bank: prints the accepted loss
//! trace, the learned shape parameters and gains, and writes the bank.
//!
//! cargo run --release --example jacobi_optimization -- [bank.txt]

use specmatch::config::{Config, Mode, Profile};
use specmatch::eval::GroundTruth;
use specmatch::filters::FilterBank;
use specmatch::mesh::shapes;
use specmatch::pipeline::{evaluate, match_shapes, prepare_shape};

fn main() -> specmatch::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "bank.txt".into());
    let (src, dst) = shapes::bent_pair(3, 1.2, 7);
    let mut config = Config::for_profile(Profile::Desk);
    config.mode = Mode::JacobiOpt;
    let m = prepare_shape(src, &config)?;
    let n = prepare_shape(dst, &config)?;

    let result = match_shapes(&m, &n, &config)?;
    for t in &result.trace {
        println!(
            "step {:>3} outer {} total {:.8e} freq {:.6e} smooth {:.3e}",
            t.step, t.outer, t.loss.total, t.loss.freq, t.loss.smooth
        );
    }
    if let Some(FilterBank::Jacobi(bank)) = &result.bank {
        println!("shape a {:.4} b {:.4}", bank.a(), bank.b());
        println!("gains {:?}", bank.gains().iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>());
    }
    if let Some(bank) = &result.bank {
        bank.write(&out)?;
        println!("wrote {out}");
    }
    let ev = evaluate(&m, &n, &result, &GroundTruth::identity(m.n()), &config)?;
    println!(
        "error x100 {:.3} vs descriptor baseline {:.3} (ratio {:.3})",
        ev.result.mean_x100(),
        ev.baseline.mean_x100(),
        ev.ratio()
    );
    Ok(())
}
