//! Orthonormal Jacobi polynomials on `[-1, 1]` and the trainable Jacobi bank.
//!
//! `J_0 = 1`, `J_1 = (a−b)/2 + (a+b+2)/2·x`, and for `l ≥ 2` the three-term
//! recurrence `J_l = (μ_l x + μ'_l) J_{l−1} − μ''_l J_{l−2}`. Each `J_l` is divided
//! by its norm under the weight `(1−x)^a (1+x)^b`.
//!
//! Bank coefficients use the polynomial coefficient decomposition: the effective
//! weight of order `l` in channel `s` is `α_sl ∏_{i≤l} β_i` with bounded gains
//! `β_i = β'·tanh γ_i`. Evaluating with the gains folded into the recurrence gives
//! the same filters as composing the coefficients first.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::{Error, Result};

/// Default gain bound β′.
pub const DEFAULT_BETA_CAP: f64 = 2.0;

const X_TOLERANCE: f64 = 1e-12;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of `−1 + softplus`, for shape parameters `a > −1`.
pub fn shape_to_raw(a: f64) -> f64 {
    let y = a + 1.0;
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn raw_to_shape(raw: f64) -> f64 {
    -1.0 + softplus(raw)
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    if !(a > -1.0 && b > -1.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Jacobi parameters must exceed −1, got a = {a}, b = {b}"
        )));
    }
    Ok(())
}

/// Value with first derivatives with respect to `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    v: f64,
    da: f64,
    db: f64,
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, da: 0.0, db: 0.0 }
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        Self {
            v: inv,
            da: -self.da * inv * inv,
            db: -self.db * inv * inv,
        }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            da: self.da + o.da,
            db: self.db + o.db,
        }
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            da: self.da - o.da,
            db: self.db - o.db,
        }
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            da: self.da * o.v + self.v * o.da,
            db: self.db * o.v + self.v * o.db,
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self {
            v: self.v * s,
            da: self.da * s,
            db: self.db * s,
        }
    }
}

/// Recurrence coefficients `(μ_l, μ'_l, μ''_l)` for `l ≥ 2`, with derivatives.
fn recurrence(l: usize, a: Dual, b: Dual) -> (Dual, Dual, Dual) {
    let l_f = l as f64;
    let c = |v: f64| Dual::constant(v);
    let s = a + b; // a + b
    let two_l_s = s + c(2.0 * l_f); // 2l + a + b
    let l_s = s + c(l_f); // l + a + b
    let denom = (c(2.0 * l_f) * l_s * (two_l_s - c(2.0))).recip();
    let mu = (two_l_s - c(1.0)) * two_l_s * (two_l_s - c(2.0)) * denom;
    let mu1 = (two_l_s - c(1.0)) * (a * a - b * b) * denom;
    let mu2 = c(2.0) * (a + c(l_f - 1.0)) * (b + c(l_f - 1.0)) * two_l_s * denom;
    (mu, mu1, mu2)
}

/// `ln ‖J_l‖²` under the weight `(1−x)^a(1+x)^b`, with derivatives.
fn log_norm_sq(l: usize, a: f64, b: f64) -> Dual {
    let l_f = l as f64;
    let ln2 = std::f64::consts::LN_2;
    let s = a + b;
    // (2l+a+b+1)·Γ(l+a+b+1) = Γ(l+a+b+2)·(2l+a+b+1)/(l+a+b+1); the ratio is 1 at l = 0.
    let mut v = (s + 1.0) * ln2 + ln_gamma(l_f + a + 1.0) + ln_gamma(l_f + b + 1.0)
        - ln_gamma(l_f + s + 2.0)
        - ln_gamma(l_f + 1.0);
    let common = ln2 - digamma(l_f + s + 2.0);
    let mut da = common + digamma(l_f + a + 1.0);
    let mut db = common + digamma(l_f + b + 1.0);
    if l > 0 {
        v += (l_f + s + 1.0).ln() - (2.0 * l_f + s + 1.0).ln();
        let d = 1.0 / (l_f + s + 1.0) - 1.0 / (2.0 * l_f + s + 1.0);
        da += d;
        db += d;
    }
    Dual { v, da, db }
}

/// `‖J_l‖` for orders `0..=order`.
pub fn jacobi_norms(a: f64, b: f64, order: usize) -> Result<Vec<f64>> {
    check_shape(a, b)?;
    Ok((0..=order)
        .map(|l| (0.5 * log_norm_sq(l, a, b).v).exp())
        .collect())
}

fn clamp_x(x: f64) -> Result<f64> {
    if !(x >= -1.0 - X_TOLERANCE && x <= 1.0 + X_TOLERANCE) {
        return Err(Error::InvalidArgument(format!(
            "Jacobi argument {x} outside [-1, 1]"
        )));
    }
    Ok(x.clamp(-1.0, 1.0))
}

/// Orthonormal Jacobi values with `(a, b)` derivatives; `[l][i]`.
fn orthonormal_duals(a: f64, b: f64, order: usize, xs: &[f64]) -> Vec<Vec<Dual>> {
    let ad = Dual { v: a, da: 1.0, db: 0.0 };
    let bd = Dual { v: b, da: 0.0, db: 1.0 };
    let c = Dual::constant;
    let mut rows: Vec<Vec<Dual>> = Vec::with_capacity(order + 1);
    rows.push(vec![c(1.0); xs.len()]);
    if order >= 1 {
        let half = c(0.5);
        rows.push(
            xs.iter()
                .map(|&x| (ad - bd) * half + (ad + bd + c(2.0)) * half * c(x))
                .collect(),
        );
    }
    for l in 2..=order {
        let (mu, mu1, mu2) = recurrence(l, ad, bd);
        let next: Vec<Dual> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| (mu * c(x) + mu1) * rows[l - 1][i] - mu2 * rows[l - 2][i])
            .collect();
        rows.push(next);
    }
    for (l, row) in rows.iter_mut().enumerate() {
        // 1/‖J_l‖ = exp(−½ ln‖J_l‖²)
        let ln = log_norm_sq(l, a, b);
        let scale = (-0.5 * ln.v).exp();
        let inv = Dual {
            v: scale,
            da: -0.5 * ln.da * scale,
            db: -0.5 * ln.db * scale,
        };
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
    rows
}

/// `(L+1) × m` matrix of orthonormal Jacobi polynomials `Ĵ_l(x_i)`.
pub fn jacobi_eval(a: f64, b: f64, order: usize, xs: &[f64]) -> Result<DMatrix<f64>> {
    check_shape(a, b)?;
    let xs: Vec<f64> = xs.iter().map(|&x| clamp_x(x)).collect::<Result<_>>()?;
    let rows = orthonormal_duals(a, b, order, &xs);
    Ok(DMatrix::from_fn(order + 1, xs.len(), |l, i| rows[l][i].v))
}

/// Effective coefficients `w_sl = α_sl ∏_{i≤l} β_i`, with `β_i = β′·tanh γ_i`.
///
/// `gamma[i − 1]` holds `γ_i`; order 0 carries no gain.
pub fn pcd_expand(alpha: &DMatrix<f64>, gamma: &[f64], beta_cap: f64) -> DMatrix<f64> {
    let gains = gain_products(gamma, beta_cap);
    DMatrix::from_fn(alpha.nrows(), alpha.ncols(), |s, l| alpha[(s, l)] * gains[l])
}

/// `∏_{i≤l} β_i` for `l = 0..=L`.
fn gain_products(gamma: &[f64], beta_cap: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(gamma.len() + 1);
    out.push(1.0);
    let mut acc = 1.0;
    for g in gamma {
        acc *= beta_cap * g.tanh();
        out.push(acc);
    }
    out
}

/// The trainable orthonormal Jacobi filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiBank {
    /// Highest polynomial order `L`.
    pub order: usize,
    /// `S × (L+1)` raw coefficients.
    pub alpha: DMatrix<f64>,
    /// `γ_1..γ_L`.
    pub gamma: Vec<f64>,
    /// Unconstrained shape parameters: `a = −1 + softplus(a_raw)`.
    pub a_raw: f64,
    pub b_raw: f64,
    pub beta_cap: f64,
    /// Spectrum scale for `x = 2λ/λ_max − 1`; the largest eigenvalue when `None`.
    pub lambda_max: Option<f64>,
}

/// Gradient with respect to the trainable parameters of a [`JacobiBank`].
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiGrad {
    pub alpha: DMatrix<f64>,
    pub gamma: Vec<f64>,
    pub a_raw: f64,
    pub b_raw: f64,
}

impl JacobiBank {
    /// All-pass gains (`β_i = 1`) with Legendre shape and zero coefficients.
    pub fn zeros(channels: usize, order: usize, beta_cap: f64) -> Self {
        let unit_gain = (1.0 / beta_cap).atanh();
        Self {
            order,
            alpha: DMatrix::zeros(channels, order + 1),
            gamma: vec![unit_gain; order],
            a_raw: shape_to_raw(0.0),
            b_raw: shape_to_raw(0.0),
            beta_cap,
            lambda_max: None,
        }
    }

    /// Least-squares fit of a heat bank `e^{−τ_s (x+1)/2}` with log-spaced
    /// dimensionless times `τ_s ∈ [0.25, 8]` (in units of `1/λ_max`).
    pub fn heat_initialized(channels: usize, order: usize, beta_cap: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("filter bank needs a channel".into()));
        }
        if !(beta_cap > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gain bound must exceed 1 for all-pass initialization, got {beta_cap}"
            )));
        }
        let mut bank = Self::zeros(channels, order, beta_cap);
        let taus = heat_init_times(channels);
        let samples = 512;
        let xs: Vec<f64> = (0..samples)
            .map(|i| -1.0 + 2.0 * i as f64 / (samples - 1) as f64)
            .collect();
        let basis = jacobi_eval(bank.a(), bank.b(), order, &xs)?.transpose();
        let svd = basis.clone().svd(true, true);
        let gains = gain_products(&bank.gamma, beta_cap);
        for (s, tau) in taus.iter().enumerate() {
            let target = nalgebra::DVector::from_iterator(
                samples,
                xs.iter().map(|x| (-tau * (x + 1.0) / 2.0).exp()),
            );
            let w = svd
                .solve(&target, 1e-12)
                .map_err(|e| Error::Singular(e.to_string()))?;
            for l in 0..=order {
                bank.alpha[(s, l)] = w[l] / gains[l];
            }
        }
        Ok(bank)
    }

    pub fn channels(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn a(&self) -> f64 {
        raw_to_shape(self.a_raw)
    }

    pub fn b(&self) -> f64 {
        raw_to_shape(self.b_raw)
    }

    pub fn set_shape(&mut self, a: f64, b: f64) -> Result<()> {
        check_shape(a, b)?;
        self.a_raw = shape_to_raw(a);
        self.b_raw = shape_to_raw(b);
        Ok(())
    }

    pub fn gains(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| self.beta_cap * g.tanh()).collect()
    }

    pub fn effective_coefficients(&self) -> DMatrix<f64> {
        pcd_expand(&self.alpha, &self.gamma, self.beta_cap)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.alpha.ncols() != self.order + 1 || self.gamma.len() != self.order {
            return Err(Error::Dimension(format!(
                "Jacobi bank of order {} needs {} coefficient columns and {} gains, has {} and {}",
                self.order,
                self.order + 1,
                self.order,
                self.alpha.ncols(),
                self.gamma.len()
            )));
        }
        if self.alpha.nrows() == 0 {
            return Err(Error::InvalidArgument("filter bank needs a channel".into()));
        }
        if !(self.beta_cap > 0.0) {
            return Err(Error::InvalidArgument("gain bound β′ must be positive".into()));
        }
        check_shape(self.a(), self.b())
    }

    /// `S × m` filter values, evaluated with the gains folded into the recurrence:
    /// `P_l = β_l(μ_l x + μ'_l)P_{l−1} − β_l β_{l−1} μ''_l P_{l−2}`, `P_l = (∏β) J_l`.
    pub fn eval_decomposed(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        self.validate()?;
        let (a, b) = (self.a(), self.b());
        let xs: Vec<f64> = xs.iter().map(|&x| clamp_x(x)).collect::<Result<_>>()?;
        let beta = self.gains();
        let norms = jacobi_norms(a, b, self.order)?;
        let m = xs.len();
        let mut prev2 = vec![0.0; m];
        let mut prev = vec![1.0; m];
        let mut out = DMatrix::<f64>::zeros(self.channels(), m);
        let accumulate = |out: &mut DMatrix<f64>, l: usize, p: &[f64]| {
            for s in 0..self.channels() {
                let c = self.alpha[(s, l)] / norms[l];
                for (i, v) in p.iter().enumerate() {
                    out[(s, i)] += c * v;
                }
            }
        };
        accumulate(&mut out, 0, &prev);
        for l in 1..=self.order {
            let bl = beta[l - 1];
            let next: Vec<f64> = if l == 1 {
                xs.iter()
                    .map(|&x| bl * ((a - b) / 2.0 + (a + b + 2.0) / 2.0 * x))
                    .collect()
            } else {
                let (mu, mu1, mu2) = recurrence(l, Dual::constant(a), Dual::constant(b));
                let bb = bl * beta[l - 2];
                (0..m)
                    .map(|i| bl * (mu.v * xs[i] + mu1.v) * prev[i] - bb * mu2.v * prev2[i])
                    .collect()
            };
            accumulate(&mut out, l, &next);
            prev2 = std::mem::replace(&mut prev, next);
        }
        Ok(out)
    }

    /// `S × m` filter values from the composed coefficients `w = pcd_expand(α, γ)`.
    pub fn eval_composed(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        self.validate()?;
        Ok(self.effective_coefficients() * jacobi_eval(self.a(), self.b(), self.order, xs)?)
    }

    /// Chain rule from `∂L/∂H` (`S × m`, same layout as the filter values at `xs`)
    /// to the trainable parameters.
    pub fn backprop(&self, xs: &[f64], h_bar: &DMatrix<f64>) -> Result<JacobiGrad> {
        self.validate()?;
        let (s_count, order) = (self.channels(), self.order);
        if h_bar.nrows() != s_count || h_bar.ncols() != xs.len() {
            return Err(Error::Dimension(format!(
                "filter gradient is {}×{}, expected {s_count}×{}",
                h_bar.nrows(),
                h_bar.ncols(),
                xs.len()
            )));
        }
        let xs: Vec<f64> = xs.iter().map(|&x| clamp_x(x)).collect::<Result<_>>()?;
        let duals = orthonormal_duals(self.a(), self.b(), order, &xs);
        let basis = DMatrix::from_fn(order + 1, xs.len(), |l, i| duals[l][i].v);
        let w_bar = h_bar * basis.transpose(); // S × (L+1)
        let gains = gain_products(&self.gamma, self.beta_cap);
        let beta = self.gains();

        let alpha = DMatrix::from_fn(s_count, order + 1, |s, l| w_bar[(s, l)] * gains[l]);
        let mut gamma = vec![0.0; order];
        for m in 1..=order {
            let dbeta = self.beta_cap / self.gamma[m - 1].cosh().powi(2);
            for l in m..=order {
                let others: f64 = (1..=l).filter(|&i| i != m).map(|i| beta[i - 1]).product();
                let dprod = others * dbeta;
                for s in 0..s_count {
                    gamma[m - 1] += w_bar[(s, l)] * self.alpha[(s, l)] * dprod;
                }
            }
        }
        let w = self.effective_coefficients();
        let (mut da, mut db) = (0.0, 0.0);
        for s in 0..s_count {
            for l in 0..=order {
                let ws = w[(s, l)];
                if ws == 0.0 {
                    continue;
                }
                for (i, d) in duals[l].iter().enumerate() {
                    da += h_bar[(s, i)] * ws * d.da;
                    db += h_bar[(s, i)] * ws * d.db;
                }
            }
        }
        Ok(JacobiGrad {
            alpha,
            gamma,
            a_raw: da * sigmoid(self.a_raw),
            b_raw: db * sigmoid(self.b_raw),
        })
    }

    /// Trainable parameters flattened as `[α (row-major), γ, a_raw, b_raw]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for s in 0..self.channels() {
            p.extend(self.alpha.row(s).iter());
        }
        p.extend(&self.gamma);
        p.push(self.a_raw);
        p.push(self.b_raw);
        p
    }

    pub fn param_count(&self) -> usize {
        self.alpha.len() + self.gamma.len() + 2
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters for a bank with {}",
                p.len(),
                self.param_count()
            )));
        }
        let cols = self.order + 1;
        for s in 0..self.channels() {
            for l in 0..cols {
                self.alpha[(s, l)] = p[s * cols + l];
            }
        }
        let off = self.alpha.len();
        self.gamma.copy_from_slice(&p[off..off + self.order]);
        self.a_raw = p[off + self.order];
        self.b_raw = p[off + self.order + 1];
        Ok(())
    }
}

impl JacobiGrad {
    /// Same layout as [`JacobiBank::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.alpha.len() + self.gamma.len() + 2);
        for row in self.alpha.row_iter() {
            p.extend(row.iter());
        }
        p.extend(&self.gamma);
        p.push(self.a_raw);
        p.push(self.b_raw);
        p
    }
}

pub(crate) fn heat_init_times(channels: usize) -> Vec<f64> {
    if channels == 1 {
        return vec![1.0];
    }
    let (lo, hi) = (0.25f64.ln(), 8f64.ln());
    (0..channels)
        .map(|s| (lo + (hi - lo) * s as f64 / (channels - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn legendre_low_orders() {
        let v = jacobi_eval(0.0, 0.0, 2, &[1.0, 0.0, -0.5]).unwrap();
        assert!((v[(0, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((v[(1, 0)] - 1.5f64.sqrt()).abs() < 1e-14);
        // P_2(x) = (3x² − 1)/2, ‖P_2‖² = 2/5.
        let p2 = |x: f64| (3.0 * x * x - 1.0) / 2.0 / 0.4f64.sqrt();
        assert!((v[(2, 1)] - p2(0.0)).abs() < 1e-13);
        assert!((v[(2, 2)] - p2(-0.5)).abs() < 1e-13);
    }

    #[test]
    fn norm_of_constant() {
        // ‖J_0‖² = 2^{a+b+1} Γ(a+1)Γ(b+1)/Γ(a+b+2); at a = b = −½ this is π.
        let n = jacobi_norms(-0.5, -0.5, 0).unwrap();
        assert!((n[0] * n[0] - std::f64::consts::PI).abs() < 1e-12);
        assert!(jacobi_norms(-1.0, 0.0, 3).is_err());
    }

    #[test]
    fn rejects_arguments_outside_interval() {
        assert!(jacobi_eval(0.0, 0.0, 2, &[1.0 + 1e-13]).is_ok());
        assert!(jacobi_eval(0.0, 0.0, 2, &[1.1]).is_err());
    }

    #[test]
    fn pcd_zero_gains_give_constant_filters() {
        let mut bank = JacobiBank::zeros(3, 5, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        bank.alpha = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        bank.gamma = vec![0.0; 5];
        let xs = [-1.0, -0.3, 0.2, 1.0];
        let h = bank.eval_decomposed(&xs).unwrap();
        for s in 0..3 {
            for i in 0..4 {
                assert!((h[(s, i)] - h[(s, 0)]).abs() < 1e-15);
            }
        }
        let saturated = pcd_expand(&DMatrix::from_element(1, 3, 1.0), &[40.0, 40.0], 2.0);
        assert!((saturated[(0, 2)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn decomposed_matches_composed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut bank = JacobiBank::zeros(4, 8, 2.0);
            bank.alpha = DMatrix::from_fn(4, 9, |_, _| rng.random_range(-1.0..1.0));
            bank.gamma = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            bank.set_shape(rng.random_range(-0.9..2.0), rng.random_range(-0.9..2.0)).unwrap();
            let xs: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = bank.eval_decomposed(&xs).unwrap();
            let c = bank.eval_composed(&xs).unwrap();
            assert!((d - c).abs().max() < 1e-10);
        }
    }

    #[test]
    fn shape_reparameterization_round_trip() {
        for a in [-0.99, -0.5, 0.0, 1.0, 50.0] {
            assert!((raw_to_shape(shape_to_raw(a)) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_initialization_approximates_heat() {
        let bank = JacobiBank::heat_initialized(6, 8, 2.0).unwrap();
        assert!(bank.gains().iter().all(|g| (g - 1.0).abs() < 1e-12));
        let xs: Vec<f64> = (0..101).map(|i| -1.0 + 0.02 * i as f64).collect();
        let h = bank.eval_decomposed(&xs).unwrap();
        for (s, tau) in heat_init_times(6).iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                assert!((h[(s, i)] - (-tau * (x + 1.0) / 2.0).exp()).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn shape_derivatives_match_finite_differences() {
        let xs = [-0.8, -0.1, 0.4, 0.95];
        let (a, b, h) = (0.3, -0.4, 1e-6);
        let rows = orthonormal_duals(a, b, 6, &xs);
        let plus_a = jacobi_eval(a + h, b, 6, &xs).unwrap();
        let minus_a = jacobi_eval(a - h, b, 6, &xs).unwrap();
        let plus_b = jacobi_eval(a, b + h, 6, &xs).unwrap();
        let minus_b = jacobi_eval(a, b - h, 6, &xs).unwrap();
        for l in 0..=6 {
            for i in 0..xs.len() {
                let fa = (plus_a[(l, i)] - minus_a[(l, i)]) / (2.0 * h);
                let fb = (plus_b[(l, i)] - minus_b[(l, i)]) / (2.0 * h);
                assert!((rows[l][i].da - fa).abs() < 1e-6 * (1.0 + fa.abs()));
                assert!((rows[l][i].db - fb).abs() < 1e-6 * (1.0 + fb.abs()));
            }
        }
    }
}
