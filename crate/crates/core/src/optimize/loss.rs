//! Unsupervised losses on a shape pair and their gradients with respect to the
//! filter bank.

use nalgebra::DMatrix;

use crate::filters::{rescale_spectrum, FilterBank, FilterResponse, JacobiBank, JacobiGrad, CONSISTENCY_EPS};
use crate::fmap::{fmap_from_p2p, FunctionalMap, PointwiseMap};
use crate::mesh::StiffnessMatrix;
use crate::spectral::SpectralBasis;
use crate::{Error, Result};

/// Barrier threshold on `G`, one order above the consistency bound.
pub const BARRIER_EPS: f64 = 10.0 * CONSISTENCY_EPS;

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub freq: f64,
    pub bi: f64,
    pub or: f64,
    pub smooth: f64,
    /// Multiplies both map-structure terms.
    pub fmap: f64,
    /// Consistency barrier weight μ.
    pub barrier: f64,
}

impl Default for LossWeights {
    /// Near-isometric profile: no smoothness term.
    fn default() -> Self {
        Self {
            freq: 1.0,
            bi: 1.0,
            or: 1.0,
            smooth: 0.0,
            fmap: 1.0,
            barrier: 100.0,
        }
    }
}

impl LossWeights {
    pub fn non_isometric() -> Self {
        Self {
            smooth: 5.0,
            ..Self::default()
        }
    }

    pub fn zero() -> Self {
        Self {
            freq: 0.0,
            bi: 0.0,
            or: 0.0,
            smooth: 0.0,
            fmap: 0.0,
            barrier: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub freq: f64,
    pub bi: f64,
    pub or: f64,
    pub smooth: f64,
    pub barrier: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    fn new(freq: f64, bi: f64, or: f64, smooth: f64, barrier: f64, w: LossWeights) -> Self {
        let total = w.freq * freq + w.fmap * (w.bi * bi + w.or * or) + w.smooth * smooth + barrier;
        Self {
            freq,
            bi,
            or,
            smooth,
            barrier,
            total,
            weights: w,
        }
    }

    /// The part of `total` that depends on the bank; the map terms are fixed by
    /// the descriptor solves.
    pub fn bank_dependent(&self) -> f64 {
        let w = self.weights;
        w.freq * self.freq + w.smooth * self.smooth + self.barrier
    }
}

/// Map estimates for one direction. For `M ← N` the map is `C_NM` (`k_M × k_N`).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionState {
    /// Estimated functional map (from descriptors), held fixed while the bank trains.
    pub c: DMatrix<f64>,
    /// Functional map induced by the current pointwise map.
    pub c_pi: DMatrix<f64>,
    /// Dirichlet energy of the pulled-back coordinates.
    pub smooth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    /// `M ← N`: `C_NM`, rows indexed by `Λ_M`.
    pub forward: DirectionState,
    /// `N ← M`: `C_MN`, rows indexed by `Λ_N`.
    pub backward: DirectionState,
    /// Sum both directions in every term instead of the forward one only.
    pub bidirectional: bool,
}

/// `Σ_s ‖C h_s(Λ_src) − h_s(Λ_tgt) C^Π‖²` where rows of `C` index the target spectrum.
/// Returns the value and gradients with respect to `h_tgt` and `h_src`.
fn freq_term(
    c: &DMatrix<f64>,
    c_pi: &DMatrix<f64>,
    h_tgt: &DMatrix<f64>,
    h_src: &DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = c.shape();
    let s_count = h_tgt.nrows();
    let mut value = 0.0;
    let mut g_tgt = DMatrix::zeros(s_count, rows);
    let mut g_src = DMatrix::zeros(s_count, cols);
    for s in 0..s_count {
        for j in 0..cols {
            let hs = h_src[(s, j)];
            for i in 0..rows {
                let r = c[(i, j)] * hs - h_tgt[(s, i)] * c_pi[(i, j)];
                value += r * r;
                g_src[(s, j)] += 2.0 * r * c[(i, j)];
                g_tgt[(s, i)] -= 2.0 * r * c_pi[(i, j)];
            }
        }
    }
    (value, g_tgt, g_src)
}

fn check_freq_dims(c: &DMatrix<f64>, c_pi: &DMatrix<f64>, tgt: usize, src: usize) -> Result<()> {
    if c.shape() != c_pi.shape() || c.nrows() != tgt || c.ncols() != src {
        return Err(Error::Dimension(format!(
            "maps are {:?} and {:?}, filter responses cover {tgt} and {src} eigenvalues",
            c.shape(),
            c_pi.shape()
        )));
    }
    Ok(())
}

/// Frequency-aware loss from precomputed responses.
pub fn freq_from_responses(
    c: &FunctionalMap,
    c_pi: &FunctionalMap,
    response_m: &FilterResponse,
    response_n: &FilterResponse,
) -> Result<f64> {
    check_freq_dims(&c.c, &c_pi.c, response_m.k(), response_n.k())?;
    Ok(freq_term(&c.c, &c_pi.c, &response_m.h, &response_n.h).0)
}

/// `Σ_s ‖C h_s(Λ_N) − h_s(Λ_M) C^Π‖²` with `C^Π` induced by `pi`.
pub fn loss_freq(
    c: &FunctionalMap,
    pi: &PointwiseMap,
    bank: &FilterBank,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
) -> Result<f64> {
    let c_pi = fmap_from_p2p(pi, basis_m, basis_n)?;
    let rm = bank.eval(&basis_m.eigenvalues)?;
    let rn = bank.eval(&basis_n.eigenvalues)?;
    freq_from_responses(c, &c_pi, &rm, &rn)
}

/// `(‖C_NM C_MN − I‖², ‖C_NM C_NMᵀ − I‖²)`.
pub fn loss_fmap(c_nm: &DMatrix<f64>, c_mn: &DMatrix<f64>) -> Result<(f64, f64)> {
    if c_nm.ncols() != c_mn.nrows() || c_nm.nrows() != c_mn.ncols() {
        return Err(Error::Dimension(format!(
            "maps {:?} and {:?} do not compose to a square map",
            c_nm.shape(),
            c_mn.shape()
        )));
    }
    let k = c_nm.nrows();
    let id = DMatrix::<f64>::identity(k, k);
    let bi = (c_nm * c_mn - &id).norm_squared();
    let or = (c_nm * c_nm.transpose() - &id).norm_squared();
    Ok((bi, or))
}

/// `trace(Fᵀ W F)` for pulled-back coordinates `F` on the mesh with stiffness `W`.
pub fn smooth_energy(pulled: &DMatrix<f64>, stiffness: &StiffnessMatrix) -> Result<f64> {
    if pulled.nrows() != stiffness.n() {
        return Err(Error::Dimension(format!(
            "pulled-back coordinates have {} rows, stiffness is {}×{}",
            pulled.nrows(),
            stiffness.n(),
            stiffness.n()
        )));
    }
    Ok(pulled
        .column_iter()
        .map(|col| stiffness.energy(col.as_slice()))
        .sum())
}

/// Dirichlet energy of `Π V_N` measured with the stiffness of the mesh carrying it (`M`).
pub fn loss_smooth(
    pi: &PointwiseMap,
    coords_n: &DMatrix<f64>,
    stiffness_m: &StiffnessMatrix,
) -> Result<f64> {
    smooth_energy(&pi.apply(coords_n)?, stiffness_m)
}

fn barrier(g: &[f64], mu: f64) -> f64 {
    g.iter().map(|&g| (BARRIER_EPS - g).max(0.0).powi(2)).sum::<f64>() * mu
}

/// `∂barrier/∂h_si`.
fn barrier_grad(response: &FilterResponse, mu: f64) -> DMatrix<f64> {
    DMatrix::from_fn(response.channels(), response.k(), |s, i| {
        -4.0 * mu * (BARRIER_EPS - response.g[i]).max(0.0) * response.h[(s, i)]
    })
}

/// Responses scaled to `G = 1` at every eigenvalue.
///
/// Refinement depends on a bank only through the direction of `h(λ) ∈ R^S` at
/// each eigenvalue (up to the ratio of norms across the pair), so the frequency
/// term is measured on unit responses. Without this every bank could lower it
/// by shrinking or by piling energy onto a few eigenvalues.
fn unit_columns(response: &FilterResponse) -> Result<DMatrix<f64>> {
    let mut u = response.h.clone();
    for (i, mut col) in u.column_iter_mut().enumerate() {
        let g = response.g[i];
        if !(g > 0.0) {
            return Err(Error::Consistency {
                index: i,
                value: g,
                threshold: CONSISTENCY_EPS,
            });
        }
        col /= g.sqrt();
    }
    Ok(u)
}

/// Pulls `∂L/∂U` back through `u = h/‖h‖` column by column.
fn unit_columns_backprop(response: &FilterResponse, u: &DMatrix<f64>, g_u: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = g_u.clone();
    for i in 0..u.ncols() {
        let dot = u.column(i).dot(&g_u.column(i));
        let norm = response.g[i].sqrt();
        let mut col = out.column_mut(i);
        col.axpy(-dot, &u.column(i), 1.0);
        col /= norm;
    }
    out
}

/// Losses for given responses on `Λ_M` and `Λ_N`, with `∂L/∂H` for each.
fn evaluate(
    state: &PairState,
    response_m: &FilterResponse,
    response_n: &FilterResponse,
    weights: LossWeights,
) -> Result<(LossBreakdown, DMatrix<f64>, DMatrix<f64>)> {
    let (km, kn) = (response_m.k(), response_n.k());
    let f = &state.forward;
    check_freq_dims(&f.c, &f.c_pi, km, kn)?;
    let (um, un) = (unit_columns(response_m)?, unit_columns(response_n)?);
    let (mut freq, mut gm, mut gn) = freq_term(&f.c, &f.c_pi, &um, &un);
    let (mut bi, mut or) = loss_fmap(&f.c, &state.backward.c)?;
    let mut smooth = f.smooth;
    if state.bidirectional {
        let b = &state.backward;
        check_freq_dims(&b.c, &b.c_pi, kn, km)?;
        let (v, g_tgt, g_src) = freq_term(&b.c, &b.c_pi, &un, &um);
        freq += v;
        gn += g_tgt;
        gm += g_src;
        let (bi_b, or_b) = loss_fmap(&b.c, &f.c)?;
        bi += bi_b;
        or += or_b;
        smooth += b.smooth;
    }
    let mut gm = unit_columns_backprop(response_m, &um, &gm) * weights.freq;
    let mut gn = unit_columns_backprop(response_n, &un, &gn) * weights.freq;
    let barrier_value = barrier(&response_m.g, weights.barrier) + barrier(&response_n.g, weights.barrier);
    gm += barrier_grad(response_m, weights.barrier);
    gn += barrier_grad(response_n, weights.barrier);
    Ok((
        LossBreakdown::new(freq, bi, or, smooth, barrier_value, weights),
        gm,
        gn,
    ))
}

/// Combined objective for a bank; the barrier term keeps `G` away from zero.
/// The frequency term is evaluated on unit responses (see [`unit_columns`]).
pub fn total_loss(
    state: &PairState,
    bank: &FilterBank,
    eigenvalues_m: &[f64],
    eigenvalues_n: &[f64],
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let rm = FilterResponse::from_values(bank.values(eigenvalues_m)?);
    let rn = FilterResponse::from_values(bank.values(eigenvalues_n)?);
    Ok(evaluate(state, &rm, &rn, weights)?.0)
}

/// Spectrum coordinates the bank sees on one shape.
fn bank_coordinates(bank: &JacobiBank, eigenvalues: &[f64]) -> Result<Vec<f64>> {
    let top = bank
        .lambda_max
        .or_else(|| eigenvalues.last().copied())
        .ok_or_else(|| Error::InvalidArgument("empty spectrum".into()))?;
    if !(top > 0.0) {
        return Err(Error::InvalidArgument("Jacobi bank needs λ_max > 0".into()));
    }
    Ok(rescale_spectrum(eigenvalues, top))
}

/// Objective and its gradient with respect to the Jacobi bank parameters.
pub fn grad_filter_params(
    state: &PairState,
    bank: &FilterBank,
    eigenvalues_m: &[f64],
    eigenvalues_n: &[f64],
    weights: LossWeights,
) -> Result<(LossBreakdown, JacobiGrad)> {
    let FilterBank::Jacobi(jacobi) = bank else {
        return Err(Error::InvalidArgument(format!(
            "gradients need a Jacobi bank, got {}",
            bank.kind()
        )));
    };
    let xm = bank_coordinates(jacobi, eigenvalues_m)?;
    let xn = bank_coordinates(jacobi, eigenvalues_n)?;
    let rm = FilterResponse::from_values(jacobi.eval_decomposed(&xm)?);
    let rn = FilterResponse::from_values(jacobi.eval_decomposed(&xn)?);
    let (loss, gm, gn) = evaluate(state, &rm, &rn, weights)?;
    let mut grad = jacobi.backprop(&xm, &gm)?;
    let other = jacobi.backprop(&xn, &gn)?;
    grad.alpha += other.alpha;
    for (g, o) in grad.gamma.iter_mut().zip(other.gamma) {
        *g += o;
    }
    grad.a_raw += other.a_raw;
    grad.b_raw += other.b_raw;
    Ok((loss, grad))
}
