//! Response curves of the heat, Meyer and heat-initialized Jacobi banks on a
//! mesh spectrum, with their energy G(λ) = Σ h_s(λ)², written as SVG.
//!
//! cargo run --release --example filter_banks -- [out_dir]

use std::path::PathBuf;

use specmatch::filters::{FilterBank, FilterResponse, JacobiBank};
use specmatch::mesh::{assemble_operators, shapes};
use specmatch::plot::filter_chart;
use specmatch::spectral::{eigendecompose, EigenSolver};

fn main() -> specmatch::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "filter_banks".into()));
    std::fs::create_dir_all(&dir).map_err(|source| specmatch::Error::Io { path: dir.clone(), source })?;

    let mesh = shapes::bumpy_blob(3, 0.2, 1);
    let (mass, stiffness) = assemble_operators(&mesh)?;
    let basis = eigendecompose(&stiffness, &mass, 80, EigenSolver::Auto, 0)?;
    let top = basis.lambda_max();

    let banks = [
        FilterBank::Heat { times: [0.5, 2.0, 8.0].iter().map(|t| t / top).collect() },
        FilterBank::Meyer { scales: 4, lambda_max: None },
        FilterBank::Jacobi(JacobiBank::heat_initialized(6, 8, 2.0)?),
    ];
    for bank in &banks {
        let r = FilterResponse::from_values(bank.values(&basis.eigenvalues)?);
        let (lo, hi) = r.g.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), g| (lo.min(*g), hi.max(*g)));
        let path = dir.join(format!("{}.svg", bank.kind()));
        filter_chart(bank, &basis.eigenvalues, &format!("{} bank", bank.kind()))?.write(&path)?;
        println!(
            "{:<7} channels {} G in [{lo:.3e}, {hi:.3e}] consistent {} -> {}",
            bank.kind(),
            bank.channels(),
            r.check_consistency().is_ok(),
            path.display()
        );
    }
    Ok(())
}
