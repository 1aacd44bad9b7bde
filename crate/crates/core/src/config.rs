//! Pipeline configuration: a plain `key = value` file, overridden by CLI flags.
//!
//! Every hyperparameter is a named key. `profile` selects the base values
//! (`full` for full-scale defaults, `desk` for a small truncation) and is applied
//! before all other keys regardless of where it appears.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::descriptors::WKS_VARIANCE_FACTOR;
use crate::filters::DEFAULT_BETA_CAP;
use crate::optimize::{LossWeights, OptimizerConfig};
use crate::spectral::EigenSolver;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Nearest neighbours in descriptor space.
    Descriptor,
    /// Ideal-filter schedule growing the truncation.
    Zoomout,
    /// Repeated refinement with a fixed heat bank.
    Heat,
    /// Repeated refinement with a Meyer tight frame.
    Meyer,
    /// Per-pair optimized Jacobi bank.
    #[default]
    JacobiOpt,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Descriptor, Mode::Zoomout, Mode::Heat, Mode::Meyer, Mode::JacobiOpt];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Descriptor => "descriptor",
            Mode::Zoomout => "zoomout",
            Mode::Heat => "heat",
            Mode::Meyer => "meyer",
            Mode::JacobiOpt => "jacobi-opt",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected one of descriptor, zoomout, heat, meyer, jacobi-opt)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Full,
    Desk,
}

impl Profile {
    fn name(self) -> &'static str {
        match self {
            Profile::Full => "full",
            Profile::Desk => "desk",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::Config(format!("unknown profile {s:?} (expected full or desk)"))),
        }
    }
}

fn solver_name(s: EigenSolver) -> &'static str {
    match s {
        EigenSolver::Auto => "auto",
        EigenSolver::Dense => "dense",
        EigenSolver::Krylov => "krylov",
    }
}

fn parse_solver(s: &str) -> Result<EigenSolver> {
    match s {
        "auto" => Ok(EigenSolver::Auto),
        "dense" => Ok(EigenSolver::Dense),
        "krylov" => Ok(EigenSolver::Krylov),
        _ => Err(Error::Config(format!("unknown eigen_solver {s:?} (expected auto, dense or krylov)"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub profile: Profile,
    pub src: Option<PathBuf>,
    pub dst: Option<PathBuf>,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub gt: Option<PathBuf>,
    pub gt_one_based: bool,
    /// Correspondence files are written 1-based when set.
    pub output_one_based: bool,
    pub cache_dir: Option<PathBuf>,

    pub k: usize,
    pub eigen_solver: EigenSolver,
    /// Rescale each mesh to unit surface area before assembly.
    pub normalize_area: bool,
    pub wks_dim: usize,
    pub wks_variance: f64,
    pub normalize_descriptors: bool,
    pub lambda_reg: f64,
    pub tau: f64,

    pub channels: usize,
    pub order: usize,
    pub beta_cap: f64,
    /// Heat bank times as multiples of `1/λ_max` of the pair.
    pub heat_times: Vec<f64>,
    pub meyer_scales: usize,

    pub learning_rate: f64,
    pub max_iterations: usize,
    pub inner_steps: usize,
    pub rel_tol: f64,
    pub theta_freq: f64,
    pub theta_bi: f64,
    pub theta_or: f64,
    pub theta_sm: f64,
    pub theta_fmap: f64,
    pub barrier: f64,
    pub bidirectional: bool,

    /// Refinement steps for the fixed-bank modes.
    pub refine_iterations: usize,
    pub zoomout_start: usize,
    pub zoomout_step: usize,

    pub seed: u64,
    pub diameter_samples: usize,
    pub allow_disconnected: bool,
    pub allow_non_manifold: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self::for_profile(Profile::Full)
    }
}

/// Every key accepted by [`Config::set`], in serialization order.
pub const KEYS: [&str; 40] = [
    "profile",
    "src",
    "dst",
    "mode",
    "out_dir",
    "gt",
    "gt_one_based",
    "output_one_based",
    "cache_dir",
    "k",
    "eigen_solver",
    "normalize_area",
    "wks_dim",
    "wks_variance",
    "normalize_descriptors",
    "lambda_reg",
    "tau",
    "channels",
    "order",
    "beta_cap",
    "heat_times",
    "meyer_scales",
    "learning_rate",
    "max_iterations",
    "inner_steps",
    "rel_tol",
    "theta_freq",
    "theta_bi",
    "theta_or",
    "theta_sm",
    "theta_fmap",
    "barrier",
    "bidirectional",
    "refine_iterations",
    "zoomout_start",
    "zoomout_step",
    "seed",
    "diameter_samples",
    "allow_disconnected",
    "allow_non_manifold",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl Config {
    pub fn for_profile(profile: Profile) -> Self {
        let opt = OptimizerConfig::default();
        let w = LossWeights::default();
        let mut c = Self {
            profile,
            src: None,
            dst: None,
            mode: Mode::default(),
            out_dir: PathBuf::from("out"),
            gt: None,
            gt_one_based: false,
            output_one_based: false,
            cache_dir: None,
            k: 200,
            eigen_solver: EigenSolver::Auto,
            normalize_area: true,
            wks_dim: 128,
            wks_variance: WKS_VARIANCE_FACTOR,
            normalize_descriptors: true,
            lambda_reg: opt.lambda_reg,
            tau: opt.tau,
            channels: 6,
            order: 8,
            beta_cap: DEFAULT_BETA_CAP,
            heat_times: vec![0.5, 2.0, 8.0],
            meyer_scales: 4,
            learning_rate: opt.learning_rate,
            max_iterations: opt.max_iterations,
            inner_steps: opt.inner_steps,
            rel_tol: opt.rel_tol,
            theta_freq: w.freq,
            theta_bi: w.bi,
            theta_or: w.or,
            theta_sm: w.smooth,
            theta_fmap: w.fmap,
            barrier: w.barrier,
            bidirectional: opt.bidirectional,
            refine_iterations: 10,
            zoomout_start: 20,
            zoomout_step: 10,
            seed: 0,
            diameter_samples: 64,
            allow_disconnected: false,
            allow_non_manifold: false,
        };
        if profile == Profile::Desk {
            c.k = 50;
            c.wks_dim = 64;
        }
        c
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "profile" => self.profile = v.parse()?,
            "src" => self.src = opt_path(v),
            "dst" => self.dst = opt_path(v),
            "mode" => self.mode = v.parse()?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "gt" => self.gt = opt_path(v),
            "gt_one_based" => self.gt_one_based = parse_bool(key, v)?,
            "output_one_based" => self.output_one_based = parse_bool(key, v)?,
            "cache_dir" => self.cache_dir = opt_path(v),
            "k" => self.k = parse(key, v)?,
            "eigen_solver" => self.eigen_solver = parse_solver(v)?,
            "normalize_area" => self.normalize_area = parse_bool(key, v)?,
            "wks_dim" => self.wks_dim = parse(key, v)?,
            "wks_variance" => self.wks_variance = parse(key, v)?,
            "normalize_descriptors" => self.normalize_descriptors = parse_bool(key, v)?,
            "lambda_reg" => self.lambda_reg = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "channels" => self.channels = parse(key, v)?,
            "order" => self.order = parse(key, v)?,
            "beta_cap" => self.beta_cap = parse(key, v)?,
            "heat_times" => self.heat_times = parse_list(key, v)?,
            "meyer_scales" => self.meyer_scales = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "max_iterations" => self.max_iterations = parse(key, v)?,
            "inner_steps" => self.inner_steps = parse(key, v)?,
            "rel_tol" => self.rel_tol = parse(key, v)?,
            "theta_freq" => self.theta_freq = parse(key, v)?,
            "theta_bi" => self.theta_bi = parse(key, v)?,
            "theta_or" => self.theta_or = parse(key, v)?,
            "theta_sm" => self.theta_sm = parse(key, v)?,
            "theta_fmap" => self.theta_fmap = parse(key, v)?,
            "barrier" => self.barrier = parse(key, v)?,
            "bidirectional" => self.bidirectional = parse_bool(key, v)?,
            "refine_iterations" => self.refine_iterations = parse(key, v)?,
            "zoomout_start" => self.zoomout_start = parse(key, v)?,
            "zoomout_step" => self.zoomout_step = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "diameter_samples" => self.diameter_samples = parse(key, v)?,
            "allow_disconnected" => self.allow_disconnected = parse_bool(key, v)?,
            "allow_non_manifold" => self.allow_non_manifold = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Builds a config from `(key, value)` pairs; the last `profile` wins and is applied first.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let profile = match pairs.iter().rev().find(|(k, _)| *k == "profile") {
            Some((_, v)) => v.trim().parse()?,
            None => Profile::default(),
        };
        let mut c = Self::for_profile(profile);
        for (k, v) in pairs {
            if k != "profile" {
                c.set(k, v)?;
            }
        }
        c.validated()
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Loads `path` (if any), then applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => Self::parse_pairs(&fs::read_to_string(p).map_err(Error::io(p))?)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn validated(self) -> Result<Self> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if self.wks_dim == 0 {
            return bad("wks_dim must be at least 1");
        }
        if !(self.wks_variance > 0.0) {
            return bad("wks_variance must be positive");
        }
        if !(self.lambda_reg >= 0.0) {
            return bad("lambda_reg must be nonnegative");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if self.channels == 0 {
            return bad("channels must be at least 1");
        }
        if !(self.beta_cap > 1.0) {
            return bad("beta_cap must exceed 1");
        }
        if self.heat_times.is_empty() || self.heat_times.iter().any(|t| !(*t >= 0.0)) {
            return bad("heat_times must be a nonempty list of nonnegative numbers");
        }
        if self.meyer_scales == 0 {
            return bad("meyer_scales must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_iterations == 0 || self.inner_steps == 0 {
            return bad("max_iterations and inner_steps must be at least 1");
        }
        let thetas = [
            self.theta_freq,
            self.theta_bi,
            self.theta_or,
            self.theta_sm,
            self.theta_fmap,
            self.barrier,
        ];
        if thetas.iter().any(|t| !(*t >= 0.0)) {
            return bad("loss weights must be nonnegative");
        }
        if self.refine_iterations == 0 {
            return bad("refine_iterations must be at least 1");
        }
        if self.zoomout_start == 0 || self.zoomout_step == 0 || self.zoomout_start > self.k {
            return bad("zoomout_start must lie in 1..=k and zoomout_step must be positive");
        }
        if self.diameter_samples == 0 {
            return bad("diameter_samples must be at least 1");
        }
        Ok(self)
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            freq: self.theta_freq,
            bi: self.theta_bi,
            or: self.theta_or,
            smooth: self.theta_sm,
            fmap: self.theta_fmap,
            barrier: self.barrier,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            max_iterations: self.max_iterations,
            inner_steps: self.inner_steps,
            rel_tol: self.rel_tol,
            tau: self.tau,
            lambda_reg: self.lambda_reg,
            weights: self.weights(),
            bidirectional: self.bidirectional,
            final_refinements: self.refine_iterations,
        }
    }

    /// Value of `key` as it would appear in a config file.
    pub fn get(&self, key: &str) -> Option<String> {
        let list = |v: &[f64]| v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",");
        Some(match key {
            "profile" => self.profile.name().into(),
            "src" => show_path(&self.src),
            "dst" => show_path(&self.dst),
            "mode" => self.mode.name().into(),
            "out_dir" => self.out_dir.display().to_string(),
            "gt" => show_path(&self.gt),
            "gt_one_based" => self.gt_one_based.to_string(),
            "output_one_based" => self.output_one_based.to_string(),
            "cache_dir" => show_path(&self.cache_dir),
            "k" => self.k.to_string(),
            "eigen_solver" => solver_name(self.eigen_solver).into(),
            "normalize_area" => self.normalize_area.to_string(),
            "wks_dim" => self.wks_dim.to_string(),
            "wks_variance" => self.wks_variance.to_string(),
            "normalize_descriptors" => self.normalize_descriptors.to_string(),
            "lambda_reg" => self.lambda_reg.to_string(),
            "tau" => self.tau.to_string(),
            "channels" => self.channels.to_string(),
            "order" => self.order.to_string(),
            "beta_cap" => self.beta_cap.to_string(),
            "heat_times" => list(&self.heat_times),
            "meyer_scales" => self.meyer_scales.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "max_iterations" => self.max_iterations.to_string(),
            "inner_steps" => self.inner_steps.to_string(),
            "rel_tol" => self.rel_tol.to_string(),
            "theta_freq" => self.theta_freq.to_string(),
            "theta_bi" => self.theta_bi.to_string(),
            "theta_or" => self.theta_or.to_string(),
            "theta_sm" => self.theta_sm.to_string(),
            "theta_fmap" => self.theta_fmap.to_string(),
            "barrier" => self.barrier.to_string(),
            "bidirectional" => self.bidirectional.to_string(),
            "refine_iterations" => self.refine_iterations.to_string(),
            "zoomout_start" => self.zoomout_start.to_string(),
            "zoomout_step" => self.zoomout_step.to_string(),
            "seed" => self.seed.to_string(),
            "diameter_samples" => self.diameter_samples.to_string(),
            "allow_disconnected" => self.allow_disconnected.to_string(),
            "allow_non_manifold" => self.allow_non_manifold.to_string(),
            _ => return None,
        })
    }

    /// Full config in file syntax; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_hyperparameters() {
        let c = Config::default();
        assert_eq!((c.k, c.channels, c.order), (200, 6, 8));
        assert_eq!((c.tau, c.lambda_reg, c.learning_rate), (0.07, 100.0, 1e-3));
        assert_eq!((c.theta_bi, c.theta_or, c.theta_freq), (1.0, 1.0, 1.0));
        assert_eq!(Config::for_profile(Profile::Desk).k, 50);
    }

    #[test]
    fn file_then_overrides() {
        let text = "# comment\nk = 30\nmode = zoomout  # trailing\nprofile = desk\nheat_times = 1, 2.5\n";
        let pairs = Config::parse_pairs(text).unwrap();
        let overrides = vec![("k".to_string(), "40".to_string())];
        let mut all = pairs;
        all.extend(overrides);
        let c = Config::from_pairs(all.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(c.k, 40);
        assert_eq!(c.mode, Mode::Zoomout);
        assert_eq!(c.profile, Profile::Desk);
        assert_eq!(c.wks_dim, 64);
        assert_eq!(c.heat_times, vec![1.0, 2.5]);
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::for_profile(Profile::Desk);
        c.src = Some("a.off".into());
        c.mode = Mode::Meyer;
        c.theta_sm = 5.0;
        let pairs = Config::parse_pairs(&c.to_text()).unwrap();
        let back = Config::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn rejects_bad_values() {
        for (k, v) in [
            ("nope", "1"),
            ("k", "x"),
            ("mode", "fast"),
            ("tau", "0"),
            ("bidirectional", "maybe"),
            ("zoomout_start", "500"),
        ] {
            let err = Config::from_pairs([(k, v)]).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{k} = {v}: {err}");
        }
        assert!(Config::parse_pairs("k 3").is_err());
    }
}
