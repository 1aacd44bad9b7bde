//! Per-pair optimization of a Jacobi filter bank on unsupervised losses.
//!
//! The descriptor map `C` stays fixed. Each outer iteration runs Adam steps on
//! the bank parameters against the current pointwise map, then refines the
//! pointwise maps in closed form with the updated bank. The first outer
//! iteration evaluates losses on the soft descriptor map; later ones use the
//! refined hard maps. A step is kept only if it does not increase the loss, so the
//! recorded trace never increases.

mod loss;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::filters::{FilterBank, JacobiBank};
use crate::fmap::{
    filter_refine_fmap, fmap_from_p2p, p2p_from_features, p2p_from_fmap, soft_apply,
    solve_fmap_descriptors_scaled, FunctionalMap, PointwiseMap,
};
use crate::mesh::StiffnessMatrix;
use crate::spectral::SpectralBasis;
use crate::{Error, Result};

pub use loss::{
    freq_from_responses, grad_filter_params, loss_fmap, loss_freq, loss_smooth, smooth_energy,
    total_loss, DirectionState, LossBreakdown, LossWeights, PairState, BARRIER_EPS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Budget of parameter steps, accepted or not.
    pub max_iterations: usize,
    /// Parameter steps per outer iteration.
    pub inner_steps: usize,
    /// Stop once the relative loss improvement falls below this.
    pub rel_tol: f64,
    /// Softmax temperature of the initial soft map.
    pub tau: f64,
    /// Commutativity weight of the descriptor solve.
    pub lambda_reg: f64,
    pub weights: LossWeights,
    pub bidirectional: bool,
    /// Closed-form refinements with the trained bank that produce the output map.
    pub final_refinements: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_iterations: 300,
            inner_steps: 30,
            rel_tol: 1e-6,
            tau: 0.07,
            lambda_reg: 100.0,
            weights: LossWeights::default(),
            bidirectional: true,
            final_refinements: 10,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.max_iterations == 0 || self.inner_steps == 0 || self.final_refinements == 0 {
            return Err(Error::InvalidArgument("iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything the losses need about the two shapes.
#[derive(Debug, Clone, Copy)]
pub struct PairData<'a> {
    pub basis_m: &'a SpectralBasis,
    pub basis_n: &'a SpectralBasis,
    /// Per-vertex descriptors, `n × d`.
    pub desc_m: &'a DMatrix<f64>,
    pub desc_n: &'a DMatrix<f64>,
    pub stiffness_m: &'a StiffnessMatrix,
    pub stiffness_n: &'a StiffnessMatrix,
    /// Vertex coordinates, `n × 3`.
    pub coords_m: &'a DMatrix<f64>,
    pub coords_n: &'a DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// Parameter steps taken so far.
    pub step: usize,
    pub outer: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutput {
    pub bank: JacobiBank,
    pub fmap: FunctionalMap,
    /// Source-to-target map after refinement with the returned bank.
    pub p2p: Vec<usize>,
    /// Descriptor nearest-neighbour map the loop started from.
    pub initial_p2p: Vec<usize>,
    /// Accepted states only; totals never increase.
    pub trace: Vec<TraceEntry>,
}

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("iteration,freq,bi,or,smooth,total\n");
    for t in trace {
        let l = &t.loss;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            t.step, l.freq, l.bi, l.or, l.smooth, l.total
        );
    }
    out
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[TraceEntry]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trace_csv(trace)).map_err(Error::io(path))
}

/// Pulled-back basis and coordinates for one direction.
fn direction_state(
    c: &DMatrix<f64>,
    pulled: &DMatrix<f64>,
    basis_tgt: &SpectralBasis,
    k_src: usize,
    stiffness_tgt: &StiffnessMatrix,
) -> Result<DirectionState> {
    let c_pi = basis_tgt.project_matrix(&pulled.columns(0, k_src).into_owned())?;
    let smooth = loss::smooth_energy(&pulled.columns(k_src, 3).into_owned(), stiffness_tgt)?;
    Ok(DirectionState {
        c: c.clone(),
        c_pi,
        smooth,
    })
}

fn stacked(phi: &DMatrix<f64>, coords: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if coords.ncols() != 3 || coords.nrows() != phi.nrows() {
        return Err(Error::Dimension(format!(
            "coordinates are {}×{}, expected {}×3",
            coords.nrows(),
            coords.ncols(),
            phi.nrows()
        )));
    }
    let mut out = DMatrix::zeros(phi.nrows(), phi.ncols() + 3);
    out.columns_mut(0, phi.ncols()).copy_from(phi);
    out.columns_mut(phi.ncols(), 3).copy_from(coords);
    Ok(out)
}

enum LossMap<'a> {
    Soft(f64),
    Hard(&'a [usize], &'a [usize]),
}

fn pair_state(
    data: &PairData,
    c_nm: &DMatrix<f64>,
    c_mn: &DMatrix<f64>,
    map: LossMap,
    bidirectional: bool,
) -> Result<PairState> {
    let (km, kn) = (data.basis_m.k(), data.basis_n.k());
    let on_n = stacked(&data.basis_n.phi, data.coords_n)?;
    let pulled_m = match map {
        LossMap::Soft(tau) => soft_apply(data.desc_m, data.desc_n, tau, &on_n)?,
        LossMap::Hard(fwd, _) => PointwiseMap::Hard(fwd.to_vec()).apply(&on_n)?,
    };
    let forward = direction_state(c_nm, &pulled_m, data.basis_m, kn, data.stiffness_m)?;
    let backward = if bidirectional {
        let on_m = stacked(&data.basis_m.phi, data.coords_m)?;
        let pulled_n = match map {
            LossMap::Soft(tau) => soft_apply(data.desc_n, data.desc_m, tau, &on_m)?,
            LossMap::Hard(_, bwd) => PointwiseMap::Hard(bwd.to_vec()).apply(&on_m)?,
        };
        direction_state(c_mn, &pulled_n, data.basis_n, km, data.stiffness_n)?
    } else {
        // Only the map itself enters the forward-only objective.
        DirectionState {
            c: c_mn.clone(),
            c_pi: DMatrix::zeros(kn, km),
            smooth: 0.0,
        }
    };
    Ok(PairState {
        forward,
        backward,
        bidirectional,
    })
}

/// One closed-form refinement of a hard map with `bank`.
fn refine_once(
    p2p: &[usize],
    bank: &FilterBank,
    basis_src: &SpectralBasis,
    basis_tgt: &SpectralBasis,
) -> Result<(FunctionalMap, Vec<usize>)> {
    let c_pi = fmap_from_p2p(&PointwiseMap::Hard(p2p.to_vec()), basis_src, basis_tgt)?;
    let rs = bank.eval(&basis_src.eigenvalues)?;
    let rt = bank.eval(&basis_tgt.eigenvalues)?;
    let c = filter_refine_fmap(&c_pi, &rs, &rt)?;
    let next = p2p_from_fmap(&c, basis_src, basis_tgt)?;
    Ok((c, next))
}

fn admissible(bank: &FilterBank, data: &PairData) -> bool {
    bank.eval(&data.basis_m.eigenvalues).is_ok() && bank.eval(&data.basis_n.eigenvalues).is_ok()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Proposed parameters; moments are committed only through the returned state.
    fn propose(&self, params: &[f64], grad: &[f64], lr: f64) -> (Vec<f64>, Adam) {
        let t = self.t + 1;
        let m: Vec<f64> = self
            .m
            .iter()
            .zip(grad)
            .map(|(m, g)| Self::BETA1 * m + (1.0 - Self::BETA1) * g)
            .collect();
        let v: Vec<f64> = self
            .v
            .iter()
            .zip(grad)
            .map(|(v, g)| Self::BETA2 * v + (1.0 - Self::BETA2) * g * g)
            .collect();
        let (c1, c2) = (1.0 - Self::BETA1.powi(t), 1.0 - Self::BETA2.powi(t));
        let next = params
            .iter()
            .zip(m.iter().zip(&v))
            .map(|(p, (m, v))| p - lr * (m / c1) / ((v / c2).sqrt() + Self::EPS))
            .collect();
        (next, Adam { m, v, t })
    }
}

fn relative_improvement(prev: f64, next: f64) -> f64 {
    if prev == 0.0 {
        0.0
    } else {
        (prev - next) / prev.abs()
    }
}

/// Optimizes `initial` on the pair and returns the best bank with its refined map.
pub fn optimize_filters(
    data: &PairData,
    initial: &JacobiBank,
    config: &OptimizerConfig,
) -> Result<OptimizeOutput> {
    config.validate()?;
    let init_bank = FilterBank::Jacobi(initial.clone());
    for eig in [&data.basis_m.eigenvalues, &data.basis_n.eigenvalues] {
        init_bank.eval(eig)?;
    }
    let (lm, ln) = (&data.basis_m.eigenvalues, &data.basis_n.eigenvalues);
    let c_nm = solve_fmap_descriptors_scaled(data.basis_m, data.basis_n, data.desc_m, data.desc_n, config.lambda_reg)?.c;
    let c_mn = solve_fmap_descriptors_scaled(data.basis_n, data.basis_m, data.desc_n, data.desc_m, config.lambda_reg)?.c;
    let initial_p2p = p2p_from_features(data.desc_m, data.desc_n)?;
    let mut fwd = initial_p2p.clone();
    let mut bwd = if config.bidirectional {
        p2p_from_features(data.desc_n, data.desc_m)?
    } else {
        Vec::new()
    };

    let mut bank = init_bank;
    let mut state = pair_state(data, &c_nm, &c_mn, LossMap::Soft(config.tau), config.bidirectional)?;
    let mut current = total_loss(&state, &bank, lm, ln, config.weights)?;
    let mut trace = vec![TraceEntry {
        step: 0,
        outer: 0,
        loss: current,
    }];
    let mut steps = 0;
    let mut lr = config.learning_rate;
    let mut outer = 0;

    while steps < config.max_iterations {
        let outer_start = current.bank_dependent();
        let mut adam = Adam::new(initial.param_count());
        let mut stalled = true;
        for _ in 0..config.inner_steps {
            if steps >= config.max_iterations || lr < config.learning_rate * 1e-9 {
                stalled = true;
                break;
            }
            steps += 1;
            let FilterBank::Jacobi(jacobi) = &bank else { unreachable!() };
            let (_, grad) = grad_filter_params(&state, &bank, lm, ln, config.weights)?;
            let params = jacobi.params();
            let (proposal, next_adam) = adam.propose(&params, &grad.flatten(), lr);
            let mut candidate = jacobi.clone();
            candidate.set_params(&proposal)?;
            let candidate = FilterBank::Jacobi(candidate);
            let loss = if admissible(&candidate, data) {
                total_loss(&state, &candidate, lm, ln, config.weights).ok()
            } else {
                None
            };
            match loss {
                Some(loss) if loss.total <= current.total => {
                    let gain = relative_improvement(current.bank_dependent(), loss.bank_dependent());
                    bank = candidate;
                    adam = next_adam;
                    current = loss;
                    trace.push(TraceEntry { step: steps, outer, loss });
                    stalled = gain < config.rel_tol;
                    if stalled {
                        break;
                    }
                }
                _ => lr *= 0.5,
            }
        }

        // Closed-form map update with the trained bank.
        let (_, next_fwd) = refine_once(&fwd, &bank, data.basis_m, data.basis_n)?;
        let next_bwd = if config.bidirectional {
            refine_once(&bwd, &bank, data.basis_n, data.basis_m)?.1
        } else {
            Vec::new()
        };
        let next_state = pair_state(
            data,
            &c_nm,
            &c_mn,
            LossMap::Hard(&next_fwd, &next_bwd),
            config.bidirectional,
        )?;
        let next_loss = total_loss(&next_state, &bank, lm, ln, config.weights)?;
        outer += 1;
        if next_loss.total > current.total {
            // Keep the current maps; the bank may still improve against them.
            log::debug!(
                "outer iteration {outer}: map update raises loss {:e} → {:e}; rejected",
                current.total,
                next_loss.total
            );
            if stalled {
                break;
            }
            continue;
        }
        fwd = next_fwd;
        bwd = next_bwd;
        state = next_state;
        current = next_loss;
        trace.push(TraceEntry {
            step: steps,
            outer,
            loss: current,
        });
        if relative_improvement(outer_start, current.bank_dependent()) < config.rel_tol {
            break;
        }
    }

    let (mut fmap, mut p2p) = refine_once(&fwd, &bank, data.basis_m, data.basis_n)?;
    for _ in 1..config.final_refinements {
        (fmap, p2p) = refine_once(&p2p, &bank, data.basis_m, data.basis_n)?;
    }
    let FilterBank::Jacobi(bank) = bank else { unreachable!() };
    Ok(OptimizeOutput {
        bank,
        fmap,
        p2p,
        initial_p2p,
        trace,
    })
}

#[cfg(test)]
mod tests;
