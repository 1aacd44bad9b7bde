//! End-to-end matching: load, decompose, describe, match, refine, evaluate, write.
//!
//! Every stage is deterministic given the config (including its seed), so two
//! runs write byte-identical correspondence files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;

use crate::config::{Config, Mode};
use crate::descriptors::wks;
use crate::error::StageExt;
use crate::eval::{mean_geodesic_error, ErrorReport, GeodesicCache, GroundTruth};
use crate::filters::{FilterBank, JacobiBank};
use crate::fmap::{
    fmap_from_p2p, iterative_refine, p2p_from_features, write_correspondence, zoomout_schedule,
    FunctionalMap, PointwiseMap, ScheduleStep,
};
use crate::mesh::{assemble_operators, geodesic_diameter, io::load_mesh_with, Mesh, MeshOptions, StiffnessMatrix};
use crate::optimize::{optimize_filters, write_trace, PairData, TraceEntry};
use crate::plot::{filter_chart, LineChart, Series};
use crate::spectral::{cache, eigendecompose, SpectralBasis};
use crate::{Error, Result};

/// One shape with everything matching needs.
#[derive(Debug, Clone)]
pub struct ShapeData {
    /// Mesh as loaded, used for geodesic evaluation.
    pub mesh: Mesh,
    pub stiffness: StiffnessMatrix,
    pub basis: SpectralBasis,
    /// Per-vertex descriptors, `n × d`.
    pub descriptors: DMatrix<f64>,
    /// Vertex coordinates of the (possibly area-normalized) mesh, `n × 3`.
    pub coords: DMatrix<f64>,
}

impl ShapeData {
    pub fn n(&self) -> usize {
        self.mesh.n_vertices()
    }
}

pub fn mesh_options(config: &Config) -> MeshOptions {
    MeshOptions {
        allow_disconnected: config.allow_disconnected,
        allow_non_manifold: config.allow_non_manifold,
    }
}

/// Operators, eigenbasis and descriptors for `mesh`.
pub fn prepare_shape(mesh: Mesh, config: &Config) -> Result<ShapeData> {
    let working = if config.normalize_area {
        let area = mesh.total_area();
        if !(area > 0.0) {
            return Err(Error::InvalidMesh("zero total area".into()));
        }
        mesh.scaled(1.0 / area.sqrt())
    } else {
        mesh.clone()
    };
    let (mass, stiffness) = assemble_operators(&working).stage("operators")?;
    let compute = || eigendecompose(&stiffness, &mass, config.k, config.eigen_solver, config.seed);
    let basis = match &config.cache_dir {
        Some(dir) => cache::load_or_compute(&dir.join("spectra"), &working, &mass, config.k, compute),
        None => compute(),
    }
    .stage("spectral")?;
    let desc = wks(&basis, config.wks_dim, config.wks_variance).stage("descriptors")?;
    let desc = if config.normalize_descriptors {
        desc.normalized_rows()
    } else {
        desc
    };
    Ok(ShapeData {
        coords: working.vertex_matrix(),
        mesh,
        stiffness,
        basis,
        descriptors: desc.values,
    })
}

pub fn load_shape(path: &Path, config: &Config) -> Result<ShapeData> {
    let mesh = load_mesh_with(path, None, mesh_options(config)).stage("mesh")?;
    prepare_shape(mesh, config)
}

/// Outcome of matching `M` to `N`: a map from each vertex of `M` to a vertex of `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub mode: Mode,
    pub p2p: Vec<usize>,
    /// `k_M × k_N` functional map consistent with `p2p`'s last refinement.
    pub fmap: FunctionalMap,
    /// Descriptor nearest-neighbour map every mode starts from.
    pub initial_p2p: Vec<usize>,
    /// Bank used for refinement, if any.
    pub bank: Option<FilterBank>,
    pub trace: Vec<TraceEntry>,
}

/// Fixed refinement schedule for the non-optimizing modes.
pub fn schedule_for(config: &Config, m: &SpectralBasis, n: &SpectralBasis) -> Result<Option<(Vec<ScheduleStep>, Option<FilterBank>)>> {
    let k = m.k().min(n.k());
    let repeat = |bank: FilterBank| {
        let steps = vec![ScheduleStep::Bank(bank.clone()); config.refine_iterations];
        Some((steps, Some(bank)))
    };
    Ok(match config.mode {
        Mode::Descriptor | Mode::JacobiOpt => None,
        Mode::Zoomout => {
            let steps = zoomout_schedule(config.zoomout_start.min(k), config.zoomout_step, k)?;
            Some((steps, None))
        }
        Mode::Heat => {
            let top = m.lambda_max().max(n.lambda_max());
            if !(top > 0.0) {
                return Err(Error::InvalidArgument("heat bank needs λ_max > 0".into()));
            }
            repeat(FilterBank::Heat {
                times: config.heat_times.iter().map(|t| t / top).collect(),
            })
        }
        Mode::Meyer => repeat(FilterBank::Meyer {
            scales: config.meyer_scales,
            lambda_max: None,
        }),
    })
}

pub fn match_shapes(m: &ShapeData, n: &ShapeData, config: &Config) -> Result<MatchResult> {
    let initial_p2p = p2p_from_features(&m.descriptors, &n.descriptors).stage("initial map")?;
    if config.mode == Mode::JacobiOpt {
        let data = PairData {
            basis_m: &m.basis,
            basis_n: &n.basis,
            desc_m: &m.descriptors,
            desc_n: &n.descriptors,
            stiffness_m: &m.stiffness,
            stiffness_n: &n.stiffness,
            coords_m: &m.coords,
            coords_n: &n.coords,
        };
        let init = JacobiBank::heat_initialized(config.channels, config.order, config.beta_cap).stage("filter bank")?;
        let out = optimize_filters(&data, &init, &config.optimizer()).stage("optimization")?;
        return Ok(MatchResult {
            mode: config.mode,
            p2p: out.p2p,
            fmap: out.fmap,
            initial_p2p: out.initial_p2p,
            bank: Some(FilterBank::Jacobi(out.bank)),
            trace: out.trace,
        });
    }
    match schedule_for(config, &m.basis, &n.basis).stage("schedule")? {
        None => {
            let fmap = fmap_from_p2p(&PointwiseMap::Hard(initial_p2p.clone()), &m.basis, &n.basis)?;
            Ok(MatchResult {
                mode: config.mode,
                p2p: initial_p2p.clone(),
                fmap,
                initial_p2p,
                bank: None,
                trace: Vec::new(),
            })
        }
        Some((schedule, bank)) => {
            let r = iterative_refine(&initial_p2p, &schedule, &m.basis, &n.basis).stage("refinement")?;
            Ok(MatchResult {
                mode: config.mode,
                p2p: r.p2p,
                fmap: r.fmap,
                initial_p2p,
                bank,
                trace: Vec::new(),
            })
        }
    }
}

/// Refines an existing map with `bank` (repeated `refine_iterations` times) or,
/// without one, with the schedule of the configured mode.
pub fn refine_map(
    m: &ShapeData,
    n: &ShapeData,
    initial: &[usize],
    bank: Option<FilterBank>,
    config: &Config,
) -> Result<MatchResult> {
    if initial.len() != m.n() || initial.iter().any(|&j| j >= n.n()) {
        return Err(Error::Dimension(format!(
            "initial map has {} entries for {} source vertices and must index {} target vertices",
            initial.len(),
            m.n(),
            n.n()
        )));
    }
    let (schedule, bank) = match bank {
        Some(bank) => (vec![ScheduleStep::Bank(bank.clone()); config.refine_iterations], Some(bank)),
        None => schedule_for(config, &m.basis, &n.basis)?.ok_or_else(|| {
            Error::Config(format!("mode {} has no fixed schedule; pass a bank", config.mode))
        })?,
    };
    let r = iterative_refine(initial, &schedule, &m.basis, &n.basis).stage("refinement")?;
    Ok(MatchResult {
        mode: config.mode,
        p2p: r.p2p,
        fmap: r.fmap,
        initial_p2p: initial.to_vec(),
        bank,
        trace: Vec::new(),
    })
}

/// Mean geodesic error of `pred` with distances on `dst` and the diameter of `src`.
pub fn evaluate_correspondence(src: &Mesh, dst: &Mesh, pred: &[usize], gt: &GroundTruth, config: &Config) -> Result<ErrorReport> {
    let diameter = geodesic_diameter(src, config.diameter_samples, config.seed)?;
    let dir = config.cache_dir.as_ref().map(|d| d.join("geodesics"));
    let cache = GeodesicCache::new(dst, dir.as_deref())?;
    mean_geodesic_error(pred, gt, &cache, diameter)
}

/// Geodesic errors of the final and initial maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: ErrorReport,
    pub baseline: ErrorReport,
}

impl Evaluation {
    /// Final error over descriptor-baseline error (1 when both are zero).
    pub fn ratio(&self) -> f64 {
        if self.baseline.mean == 0.0 {
            if self.result.mean == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.result.mean / self.baseline.mean
        }
    }
}

/// Evaluates `result` against `gt` with distances on `N` and the diameter of `M`.
pub fn evaluate(m: &ShapeData, n: &ShapeData, result: &MatchResult, gt: &GroundTruth, config: &Config) -> Result<Evaluation> {
    let diameter = geodesic_diameter(&m.mesh, config.diameter_samples, config.seed)?;
    let dir = config.cache_dir.as_ref().map(|d| d.join("geodesics"));
    let cache = GeodesicCache::new(&n.mesh, dir.as_deref())?;
    Ok(Evaluation {
        result: mean_geodesic_error(&result.p2p, gt, &cache, diameter)?,
        baseline: mean_geodesic_error(&result.initial_p2p, gt, &cache, diameter)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub result: MatchResult,
    pub evaluation: Option<Evaluation>,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub seconds: f64,
}

fn trace_chart(trace: &[TraceEntry]) -> LineChart {
    let series = |name: &str, f: fn(&TraceEntry) -> f64| {
        Series::new(
            name,
            trace
                .iter()
                .filter(|t| f(t) > 0.0)
                .map(|t| (t.step as f64, f(t).log10()))
                .collect(),
        )
    };
    LineChart::new("loss trace (accepted states)", "parameter step", "log10 loss")
        .with_series(series("total", |t| t.loss.total))
        .with_series(series("freq", |t| t.loss.freq))
        .with_series(series("bi", |t| t.loss.bi))
        .with_series(series("or", |t| t.loss.or))
}

/// Writes all artifacts of a match to `dir` and returns their paths.
pub fn write_outputs(
    dir: &Path,
    m: &ShapeData,
    n: &ShapeData,
    result: &MatchResult,
    evaluation: Option<&Evaluation>,
    config: &Config,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut files = Vec::new();
    fn record(files: &mut Vec<PathBuf>, dir: &Path, name: &str) -> PathBuf {
        let p = dir.join(name);
        files.push(p.clone());
        p
    }
    fs::write(record(&mut files, dir, "config_used.txt"), config.to_text()).map_err(Error::io(dir))?;
    write_correspondence(record(&mut files, dir, "correspondence.txt"), &result.p2p, config.output_one_based)?;
    write_correspondence(record(&mut files, dir, "initial_correspondence.txt"), &result.initial_p2p, config.output_one_based)?;
    result.fmap.write(record(&mut files, dir, "fmap.txt"))?;
    if let Some(bank) = &result.bank {
        bank.write(record(&mut files, dir, "bank.txt"))?;
        let title = format!("{} filter bank on the source spectrum", bank.kind());
        filter_chart(bank, &m.basis.eigenvalues, &title)?.write(record(&mut files, dir, "filters.svg"))?;
    }
    if !result.trace.is_empty() {
        write_trace(record(&mut files, dir, "loss_trace.csv"), &result.trace)?;
        trace_chart(&result.trace).write(record(&mut files, dir, "loss_trace.svg"))?;
    }
    if let Some(ev) = evaluation {
        ev.result.write(dir, "mean geodesic error")?;
        for name in ["error_report.txt", "error_curve.csv"] {
            record(&mut files, dir, name);
        }
        let chart = LineChart::new(
            "cumulative geodesic error",
            "geodesic error / diameter",
            "fraction of vertices",
        )
        .with_series(Series::new(result.mode.name(), ev.result.curve.clone()))
        .with_series(Series::new("descriptor NN", ev.baseline.curve.clone()))
        .with_y_range(0.0, 1.0);
        chart.write(record(&mut files, dir, "error_curve.svg"))?;
        let summary = format!(
            "{}baseline_mean_geodesic_error {:e}\nratio_to_baseline {:.6}\n",
            ev.result.to_text(),
            ev.baseline.mean,
            ev.ratio()
        );
        fs::write(dir.join("error_report.txt"), summary).map_err(Error::io(dir))?;
    }
    log::info!("wrote {} files to {} ({} → {} vertices)", files.len(), dir.display(), m.n(), n.n());
    Ok(files)
}

/// Runs the configured pipeline and writes its artifacts to `config.out_dir`.
pub fn run_pipeline(config: &Config) -> Result<PipelineReport> {
    let start = Instant::now();
    let src = config.src.as_ref().ok_or_else(|| Error::Config("src is required".into()))?;
    let dst = config.dst.as_ref().ok_or_else(|| Error::Config("dst is required".into()))?;
    let m = load_shape(src, config).stage("source")?;
    let n = load_shape(dst, config).stage("target")?;
    let result = match_shapes(&m, &n, config)?;
    let evaluation = match &config.gt {
        Some(path) => {
            let gt = GroundTruth::read(path, config.gt_one_based, m.n(), n.n()).stage("ground truth")?;
            Some(evaluate(&m, &n, &result, &gt, config).stage("evaluation")?)
        }
        None => None,
    };
    let files = write_outputs(&config.out_dir, &m, &n, &result, evaluation.as_ref(), config).stage("output")?;
    Ok(PipelineReport {
        result,
        evaluation,
        out_dir: config.out_dir.clone(),
        files,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;
    use crate::mesh::{io::write_off, shapes};

    fn desk(mode: Mode) -> Config {
        let mut c = Config::for_profile(Profile::Desk);
        c.mode = mode;
        c.k = 20;
        c.wks_dim = 32;
        c.zoomout_start = 10;
        c.zoomout_step = 5;
        c.max_iterations = 30;
        c.inner_steps = 10;
        c.refine_iterations = 3;
        c
    }

    #[test]
    fn self_pair_is_identity_in_every_mode() {
        let shape = prepare_shape(shapes::bumpy_blob(2, 0.3, 3), &desk(Mode::Descriptor)).unwrap();
        let id: Vec<usize> = (0..shape.n()).collect();
        for mode in Mode::ALL {
            let r = match_shapes(&shape, &shape, &desk(mode)).unwrap();
            assert_eq!(r.p2p, id, "{mode}");
        }
    }

    #[test]
    fn run_writes_artifacts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = shapes::bent_pair(2, 0.4, 5);
        let (pa, pb) = (dir.path().join("a.off"), dir.path().join("b.off"));
        write_off(&a, &pa).unwrap();
        write_off(&b, &pb).unwrap();
        let gt = dir.path().join("gt.txt");
        write_correspondence(&gt, &(0..a.n_vertices()).collect::<Vec<_>>(), false).unwrap();

        let mut outputs = Vec::new();
        for run in 0..2 {
            let mut c = desk(Mode::JacobiOpt);
            c.src = Some(pa.clone());
            c.dst = Some(pb.clone());
            c.gt = Some(gt.clone());
            c.out_dir = dir.path().join(format!("run{run}"));
            let report = run_pipeline(&c).unwrap();
            for f in &report.files {
                assert!(f.exists(), "{}", f.display());
            }
            assert!(report.evaluation.is_some());
            outputs.push(fs::read(c.out_dir.join("correspondence.txt")).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    #[test]
    fn missing_inputs_are_usage_errors() {
        let err = run_pipeline(&desk(Mode::Zoomout)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let mut c = desk(Mode::Zoomout);
        c.src = Some("/nonexistent/a.off".into());
        c.dst = Some("/nonexistent/b.off".into());
        let err = run_pipeline(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().starts_with("source: mesh:"));
    }
}
