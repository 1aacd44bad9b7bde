//! Mean geodesic error of a predicted correspondence against ground truth.
//!
//! The distance between predicted and true targets is measured on the target
//! mesh and normalized by the geodesic diameter of the source mesh.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::fmap::read_correspondence;
use crate::mesh::{EdgeGraph, Mesh};
use crate::plot::{LineChart, Series};
use crate::{Error, Result};

/// Number of threshold samples on the cumulative error curve.
pub const CURVE_SAMPLES: usize = 101;
/// Default upper threshold of the curve, as a fraction of the diameter.
pub const CURVE_MAX_THRESHOLD: f64 = 0.25;

/// Target index on the other mesh for each source vertex (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    targets: Vec<usize>,
}

impl GroundTruth {
    pub fn new(targets: Vec<usize>, n_target: usize) -> Result<Self> {
        if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= n_target) {
            return Err(Error::Dimension(format!(
                "ground truth maps vertex {i} to {t}, target mesh has {n_target} vertices"
            )));
        }
        Ok(Self { targets })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n).collect(),
        }
    }

    pub fn read(path: impl AsRef<Path>, one_based: bool, n_source: usize, n_target: usize) -> Result<Self> {
        let targets = read_correspondence(path.as_ref(), one_based)?;
        if targets.len() != n_source {
            return Err(Error::Dimension(format!(
                "{} lists {} targets, source mesh has {n_source} vertices",
                path.as_ref().display(),
                targets.len()
            )));
        }
        Self::new(targets, n_target)
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Graph geodesic fields on one mesh, memoized in memory and optionally on disk.
///
/// Disk entries are keyed by the mesh content hash and the source vertex.
pub struct GeodesicCache {
    graph: EdgeGraph,
    hash: String,
    dir: Option<PathBuf>,
    fields: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
}

impl GeodesicCache {
    pub fn new(mesh: &Mesh, dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(Error::io(d))?;
        }
        Ok(Self {
            graph: EdgeGraph::new(mesh),
            hash: mesh.content_hash(),
            dir: dir.map(Path::to_path_buf),
            fields: Mutex::new(HashMap::new()),
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    fn disk_path(&self, source: usize) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(format!("geodesic-{}-{source}.bin", &self.hash[..16])))
    }

    fn load(&self, path: &Path) -> Option<Vec<f64>> {
        let bytes = fs::read(path).ok()?;
        if bytes.len() != 8 * self.n() {
            log::warn!("ignoring malformed geodesic cache entry {}", path.display());
            return None;
        }
        Some(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }

    fn store(path: &Path, field: &[f64]) -> Result<()> {
        let bytes: Vec<u8> = field.iter().flat_map(|d| d.to_le_bytes()).collect();
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
        fs::rename(&tmp, path).map_err(Error::io(path))
    }

    fn compute(&self, source: usize) -> Result<Arc<Vec<f64>>> {
        let path = self.disk_path(source);
        if let Some(field) = path.as_deref().and_then(|p| self.load(p)) {
            return Ok(Arc::new(field));
        }
        let field = self.graph.distances_from(source)?.distances;
        if let Some(p) = path {
            Self::store(&p, &field)?;
        }
        Ok(Arc::new(field))
    }

    /// Distances from `source` to every vertex.
    pub fn field(&self, source: usize) -> Result<Arc<Vec<f64>>> {
        if let Some(f) = self.fields.lock().unwrap().get(&source) {
            return Ok(f.clone());
        }
        let f = self.compute(source)?;
        self.fields.lock().unwrap().insert(source, f.clone());
        Ok(f)
    }

    /// Computes all missing fields for `sources` in parallel.
    pub fn prefetch(&self, sources: &[usize]) -> Result<()> {
        let missing: Vec<usize> = {
            let have = self.fields.lock().unwrap();
            let unique: BTreeSet<usize> = sources.iter().copied().filter(|s| !have.contains_key(s)).collect();
            unique.into_iter().collect()
        };
        let computed: Vec<(usize, Arc<Vec<f64>>)> = missing
            .par_iter()
            .map(|&s| self.compute(s).map(|f| (s, f)))
            .collect::<Result<_>>()?;
        self.fields.lock().unwrap().extend(computed);
        Ok(())
    }

    pub fn distance(&self, a: usize, b: usize) -> Result<f64> {
        let f = self.field(a)?;
        f.get(b).copied().ok_or_else(|| {
            Error::InvalidArgument(format!("vertex {b} out of range for {} vertices", self.n()))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Mean normalized geodesic error.
    pub mean: f64,
    pub per_vertex: Vec<f64>,
    /// `(threshold, fraction of vertices with error ≤ threshold)`.
    pub curve: Vec<(f64, f64)>,
    pub diameter: f64,
}

impl ErrorReport {
    pub fn from_errors(per_vertex: Vec<f64>, diameter: f64) -> Self {
        let n = per_vertex.len().max(1) as f64;
        let mean = per_vertex.iter().sum::<f64>() / n;
        let curve = error_curve(&per_vertex, CURVE_SAMPLES);
        Self {
            mean,
            per_vertex,
            curve,
            diameter,
        }
    }

    /// Mean error ×100, the customary display scale.
    pub fn mean_x100(&self) -> f64 {
        100.0 * self.mean
    }

    pub fn max(&self) -> f64 {
        self.per_vertex.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.per_vertex.len());
        let _ = writeln!(out, "diameter {:e}", self.diameter);
        let _ = writeln!(out, "mean_geodesic_error {:e}", self.mean);
        let _ = writeln!(out, "mean_geodesic_error_x100 {:.4}", self.mean_x100());
        let _ = writeln!(out, "max_geodesic_error {:e}", self.max());
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold,fraction\n");
        for (t, f) in &self.curve {
            let _ = writeln!(out, "{t:e},{f:e}");
        }
        out
    }

    pub fn curve_chart(&self, title: &str) -> LineChart {
        LineChart::new(title, "geodesic error / diameter", "fraction of vertices")
            .with_series(Series::new("correspondence", self.curve.clone()))
            .with_y_range(0.0, 1.0)
    }

    pub fn write(&self, dir: impl AsRef<Path>, title: &str) -> Result<()> {
        let dir = dir.as_ref();
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(Error::io(&p))
        };
        write("error_report.txt", self.to_text())?;
        write("error_curve.csv", self.curve_csv())?;
        self.curve_chart(title).write(dir.join("error_curve.svg"))
    }
}

/// Cumulative fraction of errors at `samples` thresholds from 0 to
/// `max(CURVE_MAX_THRESHOLD, max error)`, so the last sample is always 1.
pub fn error_curve(errors: &[f64], samples: usize) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let top = sorted.last().copied().unwrap_or(0.0).max(CURVE_MAX_THRESHOLD);
    let samples = samples.max(2);
    let n = sorted.len().max(1) as f64;
    (0..samples)
        .map(|i| {
            let t = if i + 1 == samples {
                top
            } else {
                top * i as f64 / (samples - 1) as f64
            };
            let count = sorted.partition_point(|&e| e <= t);
            (t, if sorted.is_empty() { 1.0 } else { count as f64 / n })
        })
        .collect()
}

/// Per-vertex `d_N(pred(i), gt(i)) / diameter` and its mean.
pub fn mean_geodesic_error(
    pred: &[usize],
    gt: &GroundTruth,
    target: &GeodesicCache,
    diameter: f64,
) -> Result<ErrorReport> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!(
            "prediction covers {} vertices, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::InvalidArgument(format!("diameter must be positive, got {diameter}")));
    }
    let n = target.n();
    if let Some((i, &p)) = pred.iter().enumerate().find(|(_, &p)| p >= n) {
        return Err(Error::Dimension(format!(
            "prediction maps vertex {i} to {p}, target mesh has {n} vertices"
        )));
    }
    if let Some(&t) = gt.targets().iter().find(|&&t| t >= n) {
        return Err(Error::Dimension(format!(
            "ground truth target {t} out of range for {n} vertices"
        )));
    }
    let wrong: Vec<usize> = pred
        .iter()
        .zip(gt.targets())
        .filter(|(p, t)| p != t)
        .map(|(_, &t)| t)
        .collect();
    target.prefetch(&wrong)?;
    let errors = pred
        .par_iter()
        .zip(gt.targets())
        .map(|(&p, &t)| {
            if p == t {
                Ok(0.0)
            } else {
                Ok(target.distance(t, p)? / diameter)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ErrorReport::from_errors(errors, diameter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{geodesic_distances, shapes};

    #[test]
    fn single_wrong_vertex() {
        let mesh = shapes::grid(6, 6, 1.0);
        let n = mesh.n_vertices();
        let cache = GeodesicCache::new(&mesh, None).unwrap();
        let gt = GroundTruth::identity(n);
        let mut pred: Vec<usize> = (0..n).collect();
        pred[3] = 17;
        let d = geodesic_distances(&mesh, 3).unwrap().distances[17];
        let report = mean_geodesic_error(&pred, &gt, &cache, 2.5).unwrap();
        assert!((report.mean - d / (n as f64 * 2.5)).abs() < 1e-15);
        assert_eq!(report.per_vertex.iter().filter(|e| **e > 0.0).count(), 1);
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let mesh = shapes::icosphere(1, 1.0);
        let cache = GeodesicCache::new(&mesh, None).unwrap();
        let gt = GroundTruth::identity(mesh.n_vertices());
        let report = mean_geodesic_error(gt.targets(), &gt, &cache, 1.0).unwrap();
        assert_eq!(report.mean, 0.0);
        assert_eq!(report.curve[0].1, 1.0);
    }

    #[test]
    fn curve_is_monotone_and_reaches_one() {
        let errors = vec![0.0, 0.1, 0.05, 0.6, 0.3];
        let curve = error_curve(&errors, 50);
        assert!(curve.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        assert_eq!(curve.last().unwrap(), &(0.6, 1.0));
        assert_eq!(curve[0], (0.0, 0.2));
        assert_eq!(error_curve(&[0.01], 10).last().unwrap(), &(CURVE_MAX_THRESHOLD, 1.0));
    }

    #[test]
    fn disk_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = shapes::icosphere(1, 1.0);
        let a = GeodesicCache::new(&mesh, Some(dir.path())).unwrap();
        let fa = a.field(5).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let b = GeodesicCache::new(&mesh, Some(dir.path())).unwrap();
        assert_eq!(*b.field(5).unwrap(), *fa);
        // A different mesh never sees the entry.
        let other = GeodesicCache::new(&mesh.scaled(2.0), Some(dir.path())).unwrap();
        assert_eq!(other.field(5).unwrap()[0], 2.0 * fa[0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mesh = shapes::grid(3, 3, 1.0);
        let cache = GeodesicCache::new(&mesh, None).unwrap();
        let gt = GroundTruth::identity(9);
        assert!(mean_geodesic_error(&[0; 8], &gt, &cache, 1.0).is_err());
        assert!(mean_geodesic_error(&[9; 9], &gt, &cache, 1.0).is_err());
        assert!(mean_geodesic_error(&[0; 9], &gt, &cache, 0.0).is_err());
        assert!(GroundTruth::new(vec![0, 3], 3).is_err());
    }

    #[test]
    fn reads_one_based_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.txt");
        fs::write(&p, "2\n1\n3\n").unwrap();
        let gt = GroundTruth::read(&p, true, 3, 3).unwrap();
        assert_eq!(gt.targets(), &[1, 0, 2]);
        assert!(GroundTruth::read(&p, false, 3, 3).is_err());
        assert!(GroundTruth::read(&p, true, 4, 3).is_err());
    }
}
