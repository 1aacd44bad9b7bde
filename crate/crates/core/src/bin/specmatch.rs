use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use specmatch::config::{Config, Mode};
use specmatch::descriptors::{hks, wks};
use specmatch::eval::GroundTruth;
use specmatch::filters::{FilterBank, JacobiBank};
use specmatch::fmap::{read_correspondence, write_correspondence};
use specmatch::mesh::io::load_mesh_with;
use specmatch::pipeline::{evaluate_correspondence, load_shape, mesh_options, refine_map, run_pipeline};
use specmatch::plot::filter_chart;
use specmatch::{selfcheck, Error, Result};

#[derive(Parser)]
#[command(name = "specmatch", version, about = "Spectral filter functional maps for shape correspondence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Match two meshes and write all artifacts.
    Match {
        #[arg(long)]
        src: Option<PathBuf>,
        #[arg(long)]
        dst: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ground-truth target index per source vertex.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        gt_one_based: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Refine an existing correspondence with a bank file or the mode's schedule.
    Refine {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        init_one_based: bool,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean geodesic error of a correspondence file.
    Eval {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        pred_one_based: bool,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gt_one_based: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Plot or inspect a filter bank.
    Filters {
        #[command(subcommand)]
        action: FiltersAction,
    },
    /// Compute per-vertex descriptors.
    Descriptors {
        #[command(subcommand)]
        action: DescriptorsAction,
    },
    /// Run the embedded oracle and invariant checks.
    Selfcheck,
    /// Print the resolved configuration, and the spectrum of a mesh if given.
    Dump {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct BankSource {
    /// Bank file written by `match` or `refine`.
    #[arg(long, conflicts_with = "kind")]
    bank: Option<PathBuf>,
    /// Built-in bank configured from the config keys.
    #[arg(long)]
    kind: Option<BankKind>,
    /// Mesh whose spectrum the bank is evaluated on.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Spectrum upper end when no mesh is given.
    #[arg(long)]
    lambda_max: Option<f64>,
}

#[derive(Subcommand)]
enum FiltersAction {
    /// Write response curves as SVG.
    Plot {
        #[command(flatten)]
        source: BankSource,
        #[arg(long, default_value = "filters.svg")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print channel count and the consistency margin on a spectrum.
    Inspect {
        #[command(flatten)]
        source: BankSource,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum DescriptorsAction {
    /// Write descriptors of a mesh as CSV.
    Dump {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value = "wks")]
        kind: DescriptorKind,
        #[arg(long, default_value = "descriptors.csv")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BankKind {
    Heat,
    Meyer,
    JacobiInit,
}

#[derive(Clone, Copy, ValueEnum)]
enum DescriptorKind {
    Wks,
    Hks,
}

fn config(common: &Common, mut extra: Vec<(String, String)>) -> Result<Config> {
    let mut overrides = Vec::new();
    for pair in &common.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    overrides.append(&mut extra);
    Config::load(common.config.as_deref(), &overrides)
}

fn path_pair(key: &str, p: &Option<PathBuf>) -> Option<(String, String)> {
    p.as_ref().map(|p| (key.to_string(), p.display().to_string()))
}

fn spectrum(source: &BankSource, config: &Config) -> Result<Vec<f64>> {
    match (&source.mesh, source.lambda_max) {
        (Some(mesh), _) => Ok(load_shape(mesh, config)?.basis.eigenvalues),
        (None, Some(top)) if top > 0.0 => Ok(vec![0.0, top]),
        _ => Err(Error::Config("give --mesh or a positive --lambda-max".into())),
    }
}

fn bank(source: &BankSource, config: &Config, eigenvalues: &[f64]) -> Result<FilterBank> {
    match (&source.bank, source.kind) {
        (Some(path), _) => FilterBank::read(path),
        (None, Some(BankKind::Heat)) => {
            let top = eigenvalues.last().copied().unwrap_or(1.0);
            Ok(FilterBank::Heat {
                times: config.heat_times.iter().map(|t| t / top).collect(),
            })
        }
        (None, Some(BankKind::Meyer)) => Ok(FilterBank::Meyer {
            scales: config.meyer_scales,
            lambda_max: None,
        }),
        (None, Some(BankKind::JacobiInit)) => Ok(FilterBank::Jacobi(JacobiBank::heat_initialized(
            config.channels,
            config.order,
            config.beta_cap,
        )?)),
        (None, None) => Err(Error::Config("give --bank or --kind".into())),
    }
}

fn out_dir(out: &Option<PathBuf>, config: &Config) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| config.out_dir.clone());
    fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    Ok(dir)
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Match { src, dst, mode, out, gt, gt_one_based, common } => {
            let mut extra: Vec<_> = [path_pair("src", &src), path_pair("dst", &dst), path_pair("out_dir", &out), path_pair("gt", &gt)]
                .into_iter()
                .flatten()
                .collect();
            if let Some(mode) = mode {
                extra.push(("mode".into(), mode.to_string()));
            }
            if gt_one_based {
                extra.push(("gt_one_based".into(), "true".into()));
            }
            let config = config(&common, extra)?;
            let report = run_pipeline(&config)?;
            println!("mode {} matched {} vertices in {:.2}s", config.mode, report.result.p2p.len(), report.seconds);
            if let Some(ev) = &report.evaluation {
                println!(
                    "mean geodesic error x100 {:.3} (descriptor baseline {:.3}, ratio {:.3})",
                    ev.result.mean_x100(),
                    ev.baseline.mean_x100(),
                    ev.ratio()
                );
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Refine { src, dst, init, init_one_based, bank, mode, out, common } => {
            let mut extra = Vec::new();
            if let Some(mode) = mode {
                extra.push(("mode".into(), mode.to_string()));
            }
            let config = config(&common, extra)?;
            let m = load_shape(&src, &config)?;
            let n = load_shape(&dst, &config)?;
            let initial = read_correspondence(&init, init_one_based)?;
            let bank = bank.map(FilterBank::read).transpose()?;
            let result = refine_map(&m, &n, &initial, bank, &config)?;
            let dir = out_dir(&out, &config)?;
            write_correspondence(dir.join("correspondence.txt"), &result.p2p, config.output_one_based)?;
            result.fmap.write(dir.join("fmap.txt"))?;
            if let Some(bank) = &result.bank {
                bank.write(dir.join("bank.txt"))?;
            }
            println!("refined {} vertices into {}", result.p2p.len(), dir.display());
        }
        Command::Eval { src, dst, pred, pred_one_based, gt, gt_one_based, out, common } => {
            let config = config(&common, Vec::new())?;
            let options = mesh_options(&config);
            let m = load_mesh_with(&src, None, options)?;
            let n = load_mesh_with(&dst, None, options)?;
            let pred = read_correspondence(&pred, pred_one_based)?;
            let gt = GroundTruth::read(&gt, gt_one_based, m.n_vertices(), n.n_vertices())?;
            let report = evaluate_correspondence(&m, &n, &pred, &gt, &config)?;
            print!("{}", report.to_text());
            if let Some(dir) = out {
                let dir = out_dir(&Some(dir), &config)?;
                report.write(&dir, "mean geodesic error")?;
            }
        }
        Command::Filters { action } => match action {
            FiltersAction::Plot { source, out, common } => {
                let config = config(&common, Vec::new())?;
                let eig = spectrum(&source, &config)?;
                let bank = bank(&source, &config, &eig)?;
                filter_chart(&bank, &eig, &format!("{} filter bank", bank.kind()))?.write(&out)?;
                println!("wrote {}", out.display());
            }
            FiltersAction::Inspect { source, common } => {
                let config = config(&common, Vec::new())?;
                let eig = spectrum(&source, &config)?;
                let bank = bank(&source, &config, &eig)?;
                println!("kind {}\nchannels {}", bank.kind(), bank.channels());
                if let FilterBank::Jacobi(j) = &bank {
                    println!("order {}\nshape a {:.6} b {:.6}\ngains {:?}", j.order, j.a(), j.b(), j.gains());
                }
                let response = specmatch::filters::FilterResponse::from_values(bank.values(&eig)?);
                let (i, g) = response.min_g();
                println!("eigenvalues {}\nmin G {g:e} at index {i}", eig.len());
                match response.check_consistency() {
                    Ok(()) => println!("consistent yes"),
                    Err(e) => {
                        println!("consistent no ({e})");
                        return Ok(false);
                    }
                }
            }
        },
        Command::Descriptors { action: DescriptorsAction::Dump { mesh, kind, out, common } } => {
            let config = config(&common, Vec::new())?;
            let shape = load_shape(&mesh, &config)?;
            let set = match kind {
                DescriptorKind::Wks => wks(&shape.basis, config.wks_dim, config.wks_variance)?,
                DescriptorKind::Hks => {
                    let top = shape.basis.lambda_max();
                    let times: Vec<f64> = config.heat_times.iter().map(|t| t / top).collect();
                    hks(&shape.basis, &times)?
                }
            };
            let set = if config.normalize_descriptors { set.normalized_rows() } else { set };
            set.write_csv(&out)?;
            println!("wrote {} × {} descriptors to {}", set.n(), set.dim(), out.display());
        }
        Command::Selfcheck => {
            let checks = selfcheck::run_all();
            print!("{}", selfcheck::report(&checks));
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Dump { mesh, common } => {
            let config = config(&common, Vec::new())?;
            print!("{}", config.to_text());
            if let Some(path) = mesh {
                let shape = load_shape(&path, &config)?;
                let mut text = format!(
                    "# mesh {}\n# vertices {} faces {}\n# eigenvalues\n",
                    path.display(),
                    shape.mesh.n_vertices(),
                    shape.mesh.n_faces()
                );
                for l in &shape.basis.eigenvalues {
                    text.push_str(&format!("{l:e}\n"));
                }
                print!("{text}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

