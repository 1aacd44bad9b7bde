//! Filter banks over the Laplacian spectrum.
//!
//! A bank of S functions `h_s(λ)` defines spectral filter operators
//! `Φ h_s(Λ) Φ†`. Fixed banks (heat, ideal, Meyer) reproduce classic refinement
//! schemes; the Jacobi bank is trainable.

mod jacobi;
mod meyer;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub use jacobi::{
    jacobi_eval, jacobi_norms, pcd_expand, raw_to_shape, shape_to_raw, JacobiBank, JacobiGrad,
    DEFAULT_BETA_CAP,
};

/// Lower bound on `G(λ) = Σ_s h_s(λ)²` for the closed-form refinement to apply.
pub const CONSISTENCY_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum FilterBank {
    /// `h_s(λ) = e^{−t_s λ}`.
    Heat { times: Vec<f64> },
    /// Index-based low-pass channels: `h_s(λ_i) = 1` iff `i < k_s`. The last cutoff
    /// must equal the number of eigenvalues the bank is evaluated on.
    Ideal { cutoffs: Vec<usize> },
    /// Scaling kernel plus `scales` dyadic wavelets, tight on `[0, λ_max]`
    /// (largest eigenvalue when `None`).
    Meyer {
        scales: usize,
        lambda_max: Option<f64>,
    },
    Jacobi(JacobiBank),
}

/// Filter values on a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResponse {
    /// `S × k`, `h[(s, i)] = h_s(λ_i)`.
    pub h: DMatrix<f64>,
    /// `G(λ_i) = Σ_s h_s(λ_i)²`.
    pub g: Vec<f64>,
}

impl FilterResponse {
    pub fn from_values(h: DMatrix<f64>) -> Self {
        let g = h.column_iter().map(|c| c.norm_squared()).collect();
        Self { h, g }
    }

    pub fn channels(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    /// Index and value of the smallest `G`.
    pub fn min_g(&self) -> (usize, f64) {
        self.g
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, g)| if g < best.1 { (i, g) } else { best })
    }

    /// Fails with [`Error::Consistency`] when `min G < CONSISTENCY_EPS`.
    pub fn check_consistency(&self) -> Result<()> {
        let (index, value) = self.min_g();
        if !(value >= CONSISTENCY_EPS) {
            return Err(Error::Consistency {
                index,
                value,
                threshold: CONSISTENCY_EPS,
            });
        }
        Ok(())
    }

    /// Copy restricted to the first `k` eigenvalues.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            h: self.h.columns(0, k).into_owned(),
            g: self.g[..k].to_vec(),
        }
    }
}

/// `x = 2λ/λ_max − 1`, clamped to `[−1, 1]`.
pub fn rescale_spectrum(eigenvalues: &[f64], lambda_max: f64) -> Vec<f64> {
    eigenvalues
        .iter()
        .map(|&l| (2.0 * l / lambda_max - 1.0).clamp(-1.0, 1.0))
        .collect()
}

fn check_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    let last = *eigenvalues
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty spectrum".into()))?;
    // Eigenvalues from a solver may dip below zero by rounding.
    let floor = -1e-8 * last.abs().max(1.0);
    if eigenvalues.iter().any(|l| !l.is_finite() || *l < floor) {
        return Err(Error::InvalidArgument("spectrum must be finite and nonnegative".into()));
    }
    if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("spectrum must be ascending".into()));
    }
    Ok(last)
}

impl FilterBank {
    pub fn channels(&self) -> usize {
        match self {
            FilterBank::Heat { times } => times.len(),
            FilterBank::Ideal { cutoffs } => cutoffs.len(),
            FilterBank::Meyer { scales, .. } => scales + 1,
            FilterBank::Jacobi(j) => j.channels(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FilterBank::Heat { .. } => "heat",
            FilterBank::Ideal { .. } => "ideal",
            FilterBank::Meyer { .. } => "meyer",
            FilterBank::Jacobi(_) => "jacobi",
        }
    }

    /// Single all-pass channel.
    pub fn all_pass() -> Self {
        FilterBank::Heat { times: vec![0.0] }
    }

    /// Filter values without the consistency gate.
    pub fn values(&self, eigenvalues: &[f64]) -> Result<DMatrix<f64>> {
        let last = check_spectrum(eigenvalues)?;
        let k = eigenvalues.len();
        match self {
            FilterBank::Heat { times } => {
                if times.is_empty() {
                    return Err(Error::InvalidArgument("filter bank needs a channel".into()));
                }
                if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "heat times must be nonnegative, got {t}"
                    )));
                }
                Ok(DMatrix::from_fn(times.len(), k, |s, i| {
                    (-times[s] * eigenvalues[i].max(0.0)).exp()
                }))
            }
            FilterBank::Ideal { cutoffs } => {
                if cutoffs.is_empty() {
                    return Err(Error::InvalidArgument("filter bank needs a channel".into()));
                }
                if cutoffs.windows(2).any(|w| w[1] <= w[0]) || cutoffs[0] == 0 {
                    return Err(Error::InvalidArgument(
                        "ideal cutoffs must be positive and strictly increasing".into(),
                    ));
                }
                if *cutoffs.last().unwrap() != k {
                    return Err(Error::InvalidArgument(format!(
                        "last ideal cutoff {} must equal the spectrum size {k}",
                        cutoffs.last().unwrap()
                    )));
                }
                Ok(DMatrix::from_fn(cutoffs.len(), k, |s, i| {
                    if i < cutoffs[s] {
                        1.0
                    } else {
                        0.0
                    }
                }))
            }
            FilterBank::Meyer { scales, lambda_max } => {
                let top = lambda_max.unwrap_or(last);
                if !(top > 0.0) {
                    return Err(Error::InvalidArgument("Meyer bank needs λ_max > 0".into()));
                }
                let mut h = DMatrix::zeros(scales + 1, k);
                for (i, &l) in eigenvalues.iter().enumerate() {
                    for (s, v) in meyer::meyer_values(*scales, top, l.max(0.0)).into_iter().enumerate() {
                        h[(s, i)] = v;
                    }
                }
                Ok(h)
            }
            FilterBank::Jacobi(bank) => {
                let top = bank.lambda_max.unwrap_or(last);
                if !(top > 0.0) {
                    return Err(Error::InvalidArgument("Jacobi bank needs λ_max > 0".into()));
                }
                bank.eval_decomposed(&rescale_spectrum(eigenvalues, top))
            }
        }
    }

    /// Evaluates the bank and enforces the consistency condition.
    pub fn eval(&self, eigenvalues: &[f64]) -> Result<FilterResponse> {
        let response = FilterResponse::from_values(self.values(eigenvalues)?);
        response.check_consistency()?;
        Ok(response)
    }

    /// Plain-text record: `key value…` lines, coefficient rows last.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
        let _ = writeln!(out, "kind {}", self.kind());
        let _ = writeln!(out, "S {}", self.channels());
        match self {
            FilterBank::Heat { times } => {
                let _ = writeln!(out, "times {}", list(times));
            }
            FilterBank::Ideal { cutoffs } => {
                let c: Vec<String> = cutoffs.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(out, "cutoffs {}", c.join(" "));
            }
            FilterBank::Meyer { scales, lambda_max } => {
                let _ = writeln!(out, "scales {scales}");
                let _ = writeln!(out, "lambda_max {}", opt(*lambda_max));
            }
            FilterBank::Jacobi(b) => {
                let _ = writeln!(out, "L {}", b.order);
                let _ = writeln!(out, "a {:?}", b.a());
                let _ = writeln!(out, "b {:?}", b.b());
                let _ = writeln!(out, "a_raw {:?}", b.a_raw);
                let _ = writeln!(out, "b_raw {:?}", b.b_raw);
                let _ = writeln!(out, "beta_cap {:?}", b.beta_cap);
                let _ = writeln!(out, "lambda_max {}", opt(b.lambda_max));
                let _ = writeln!(out, "gamma {}", list(&b.gamma));
                for row in b.alpha.row_iter() {
                    let r: Vec<f64> = row.iter().copied().collect();
                    let _ = writeln!(out, "alpha {}", list(&r));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields: Vec<(usize, &str, Vec<&str>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            fields.push((i + 1, key, parts.collect()));
        }
        let find = |key: &str| fields.iter().find(|f| f.1 == key);
        let require = |key: &str| {
            find(key).ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("filter bank record lacks `{key}`"),
            })
        };
        let floats = |line: usize, vals: &[&str]| -> Result<Vec<f64>> {
            vals.iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        msg: format!("bad number `{v}`: {e}"),
                    })
                })
                .collect()
        };
        let scalar = |key: &str| -> Result<f64> {
            let (line, _, vals) = require(key)?;
            match floats(*line, vals)?.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::Parse {
                    line: *line,
                    msg: format!("`{key}` takes one value"),
                }),
            }
        };
        let optional = |key: &str| -> Result<Option<f64>> {
            match find(key) {
                None => Ok(None),
                Some((_, _, v)) if v.as_slice() == ["none"] => Ok(None),
                Some(_) => scalar(key).map(Some),
            }
        };
        let count = |key: &str| -> Result<usize> {
            let v = scalar(key)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Parse {
                    line: require(key)?.0,
                    msg: format!("`{key}` must be a nonnegative integer"),
                });
            }
            Ok(v as usize)
        };
        let (_, _, kind) = require("kind")?;
        let bank = match kind.first().copied() {
            Some("heat") => {
                let (line, _, v) = require("times")?;
                FilterBank::Heat {
                    times: floats(*line, v)?,
                }
            }
            Some("ideal") => {
                let (line, _, v) = require("cutoffs")?;
                let cutoffs = v
                    .iter()
                    .map(|c| {
                        c.parse::<usize>().map_err(|e| Error::Parse {
                            line: *line,
                            msg: format!("bad cutoff `{c}`: {e}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                FilterBank::Ideal { cutoffs }
            }
            Some("meyer") => FilterBank::Meyer {
                scales: count("scales")?,
                lambda_max: optional("lambda_max")?,
            },
            Some("jacobi") => {
                let order = count("L")?;
                let (gl, _, gv) = require("gamma")?;
                let gamma = floats(*gl, gv)?;
                let rows: Vec<Vec<f64>> = fields
                    .iter()
                    .filter(|f| f.1 == "alpha")
                    .map(|(line, _, v)| floats(*line, v))
                    .collect::<Result<_>>()?;
                if rows.is_empty() || rows.iter().any(|r| r.len() != order + 1) {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("Jacobi bank needs alpha rows of {} values", order + 1),
                    });
                }
                let alpha = DMatrix::from_fn(rows.len(), order + 1, |s, l| rows[s][l]);
                let a_raw = match find("a_raw") {
                    Some(_) => scalar("a_raw")?,
                    None => shape_to_raw(scalar("a")?),
                };
                let b_raw = match find("b_raw") {
                    Some(_) => scalar("b_raw")?,
                    None => shape_to_raw(scalar("b")?),
                };
                let bank = JacobiBank {
                    order,
                    alpha,
                    gamma,
                    a_raw,
                    b_raw,
                    beta_cap: optional("beta_cap")?.unwrap_or(DEFAULT_BETA_CAP),
                    lambda_max: optional("lambda_max")?,
                };
                bank.validate()?;
                FilterBank::Jacobi(bank)
            }
            other => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("unknown filter bank kind {other:?}"),
                })
            }
        };
        if let Some((line, _, v)) = find("S") {
            if floats(*line, v)? != [bank.channels() as f64] {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("declared S disagrees with {} channels", bank.channels()),
                });
            }
        }
        Ok(bank)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(Error::io(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path).map_err(Error::io(path))?)
    }
}
