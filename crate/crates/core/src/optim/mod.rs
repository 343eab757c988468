//! Epoch-stepped optimizers.
//!
//! The shuffling SVRG family (RR-SVRG, SO-SVRG, Cyclic-SVRG) shares one inner
//! loop; they differ only in the permutation fed to [`svrg_epoch`]. RR-VR
//! reuses the loop but refreshes its control point with probability `p`.
//! Baselines: plain random reshuffling, SAGA / RR-SAGA, and the loop-based
//! SVRG / L-SVRG with uniform sampling.

mod run;
mod stepsize;

pub use run::{run, Algorithm, BoundSelection, RunConfig, RunError, Trace};
pub use stepsize::{theoretical_stepsize, StepsizeError, StepsizeRule, GRID_MULTIPLIERS};

use thiserror::Error;

use crate::linalg::{axpy, norm_sq};
use crate::problem::FiniteSumProblem;
use crate::sampling::RngState;

/// Iterates with a norm above this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("diverged at epoch {epoch}, inner step {inner} (|x| = {norm:e})")]
    Diverged { epoch: usize, inner: usize, norm: f64 },
    #[error("ordering of length {len} is not a permutation of 0..{n}")]
    InvalidPermutation { len: usize, n: usize },
    #[error("vector of length {got} does not match dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn check_finite(x: &[f64], epoch: usize, inner: usize) -> Result<(), OptimError> {
    let norm = norm_sq(x).sqrt();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(OptimError::Diverged { epoch, inner, norm });
    }
    Ok(())
}

fn check_permutation(perm: &[usize], n: usize) -> Result<(), OptimError> {
    let bad = || OptimError::InvalidPermutation { len: perm.len(), n };
    if perm.len() != n {
        return Err(bad());
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(bad());
        }
    }
    Ok(())
}

fn check_dim(v: &[f64], d: usize) -> Result<(), OptimError> {
    if v.len() != d {
        return Err(OptimError::Dimension {
            expected: d,
            got: v.len(),
        });
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<(), OptimError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(OptimError::InvalidParameter(format!(
            "stepsize must be finite and nonnegative, got {gamma}"
        )));
    }
    Ok(())
}

/// Control-variate estimator `∇f_j(x) − ∇f_j(y) + ∇f(y)` written into `out`.
pub fn control_variate_estimate(
    p: &FiniteSumProblem,
    j: usize,
    x: &[f64],
    y: &[f64],
    grad_at_y: &[f64],
    out: &mut [f64],
) {
    let mut gy = vec![0.0; p.d()];
    estimate_into(p, j, x, y, grad_at_y, out, &mut gy);
}

fn estimate_into(
    p: &FiniteSumProblem,
    j: usize,
    x: &[f64],
    y: &[f64],
    grad_at_y: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    p.grad_into(j, x, out);
    p.grad_into(j, y, scratch);
    for ((o, gy), gf) in out.iter_mut().zip(scratch.iter()).zip(grad_at_y) {
        *o = *o - gy + gf;
    }
}

/// `n` control-variate steps along `perm`. Two component gradients per step;
/// `∇f_j(y)` is recomputed rather than cached so memory stays `O(d)`.
fn control_variate_pass(
    p: &FiniteSumProblem,
    perm: &[usize],
    x: &mut [f64],
    y: &[f64],
    grad_at_y: &[f64],
    gamma: f64,
    epoch: usize,
) -> Result<(), OptimError> {
    let d = p.d();
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for (inner, &j) in perm.iter().enumerate() {
        estimate_into(p, j, x, y, grad_at_y, &mut g, &mut scratch);
        for (xk, gk) in x.iter_mut().zip(&g) {
            *xk -= gamma * gk;
        }
        check_finite(x, epoch, inner)?;
    }
    Ok(())
}

/// State of RR-SVRG, SO-SVRG and Cyclic-SVRG.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgState {
    pub x: Vec<f64>,
    /// Control point `y_t`.
    pub y: Vec<f64>,
    pub gamma: f64,
    pub epoch: usize,
}

impl SvrgState {
    /// `x₀ = y₀`.
    pub fn new(x0: Vec<f64>, gamma: f64) -> Self {
        Self {
            y: x0.clone(),
            x: x0,
            gamma,
            epoch: 0,
        }
    }
}

/// One epoch of the shuffling SVRG family along `perm`.
///
/// Computes `∇f(y_t)` once, takes `n` control-variate steps, then sets
/// `x_{t+1} = y_{t+1} = x_tⁿ`. Returns the component-gradient count, `3n`.
pub fn svrg_epoch(p: &FiniteSumProblem, perm: &[usize], s: &mut SvrgState) -> Result<u64, OptimError> {
    let n = p.n();
    check_permutation(perm, n)?;
    check_dim(&s.x, p.d())?;
    check_dim(&s.y, p.d())?;
    check_gamma(s.gamma)?;
    let grad_at_y = p.full_grad(&s.y);
    control_variate_pass(p, perm, &mut s.x, &s.y, &grad_at_y, s.gamma, s.epoch)?;
    s.y.copy_from_slice(&s.x);
    s.epoch += 1;
    Ok(3 * n as u64)
}

/// Which point RR-VR moves its control vector to on a successful coin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ControlUpdate {
    /// `y_{t+1} = x_t`, the iterate at the start of the epoch.
    #[default]
    PaperPrev,
    /// `y_{t+1} = x_{t+1}`, the newest iterate.
    PracticalCurrent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrVrState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gamma: f64,
    /// Probability of refreshing `y` after an epoch.
    pub p: f64,
    pub update_rule: ControlUpdate,
    pub epoch: usize,
    /// `∇f(y)` for the current `y`, reused until `y` moves.
    grad_at_y: Option<Vec<f64>>,
}

impl RrVrState {
    pub fn new(x0: Vec<f64>, gamma: f64, p: f64, update_rule: ControlUpdate) -> Result<Self, OptimError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(OptimError::InvalidParameter(format!(
                "control update probability must lie in (0, 1], got {p}"
            )));
        }
        Ok(Self {
            y: x0.clone(),
            x: x0,
            gamma,
            p,
            update_rule,
            epoch: 0,
            grad_at_y: None,
        })
    }

    /// Starts from separate `x₀` and `y₀`.
    pub fn with_control(mut self, y0: Vec<f64>) -> Self {
        self.y = y0;
        self.grad_at_y = None;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RrVrEpoch {
    pub grad_evals: u64,
    pub control_updated: bool,
}

/// One RR-VR epoch: the SVRG inner loop with a fixed `y`, then a biased coin
/// decides whether `y` moves. `∇f(y)` is only recomputed after `y` moved,
/// so an epoch costs `2n` or `3n` component gradients.
pub fn rr_vr_epoch(
    p: &FiniteSumProblem,
    perm: &[usize],
    s: &mut RrVrState,
    rng: &mut RngState,
) -> Result<RrVrEpoch, OptimError> {
    let n = p.n() as u64;
    check_permutation(perm, p.n())?;
    check_dim(&s.x, p.d())?;
    check_dim(&s.y, p.d())?;
    check_gamma(s.gamma)?;
    let mut grad_evals = 2 * n;
    if s.grad_at_y.is_none() {
        s.grad_at_y = Some(p.full_grad(&s.y));
        grad_evals += n;
    }
    let grad_at_y = s.grad_at_y.as_deref().expect("set above");
    let x_prev = s.x.clone();
    control_variate_pass(p, perm, &mut s.x, &s.y, grad_at_y, s.gamma, s.epoch)?;
    let control_updated = rng.bernoulli(s.p);
    if control_updated {
        match s.update_rule {
            ControlUpdate::PaperPrev => s.y = x_prev,
            ControlUpdate::PracticalCurrent => s.y.copy_from_slice(&s.x),
        }
        s.grad_at_y = None;
    }
    s.epoch += 1;
    Ok(RrVrEpoch {
        grad_evals,
        control_updated,
    })
}

/// Plain SGD iterate for the no-variance-reduction baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub x: Vec<f64>,
    pub gamma: f64,
    pub epoch: usize,
}

/// One epoch of random reshuffling without variance reduction:
/// `x ← x − γ∇f_j(x)` for `j` along `perm`. Costs `n` gradients.
pub fn rr_sgd_epoch(p: &FiniteSumProblem, perm: &[usize], s: &mut SgdState) -> Result<u64, OptimError> {
    check_permutation(perm, p.n())?;
    check_dim(&s.x, p.d())?;
    check_gamma(s.gamma)?;
    let mut g = vec![0.0; p.d()];
    for (inner, &j) in perm.iter().enumerate() {
        p.grad_into(j, &s.x, &mut g);
        for (xk, gk) in s.x.iter_mut().zip(&g) {
            *xk -= s.gamma * gk;
        }
        check_finite(&s.x, s.epoch, inner)?;
    }
    s.epoch += 1;
    Ok(p.n() as u64)
}

/// SAGA state with its `n × d` table of last-seen component gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SagaState {
    pub x: Vec<f64>,
    pub gamma: f64,
    pub epoch: usize,
    table: Vec<f64>,
    table_mean: Vec<f64>,
    d: usize,
}

impl SagaState {
    /// Fills the table at `x0`, costing `n` gradient evaluations.
    pub fn new(p: &FiniteSumProblem, x0: Vec<f64>, gamma: f64) -> Result<Self, OptimError> {
        check_dim(&x0, p.d())?;
        let d = p.d();
        let n = p.n();
        let mut table = vec![0.0; n * d];
        let mut table_mean = vec![0.0; d];
        for i in 0..n {
            let row = &mut table[i * d..(i + 1) * d];
            p.grad_into(i, &x0, row);
            axpy(1.0, row, &mut table_mean);
        }
        table_mean.iter_mut().for_each(|v| *v /= n as f64);
        Ok(Self {
            x: x0,
            gamma,
            epoch: 0,
            table,
            table_mean,
            d,
        })
    }

    pub fn table_entry(&self, i: usize) -> &[f64] {
        &self.table[i * self.d..(i + 1) * self.d]
    }

    pub fn table_mean(&self) -> &[f64] {
        &self.table_mean
    }

    /// Arithmetic mean of the table, recomputed from scratch.
    pub fn recomputed_mean(&self) -> Vec<f64> {
        let n = self.table.len() / self.d;
        let mut m = vec![0.0; self.d];
        for i in 0..n {
            axpy(1.0, self.table_entry(i), &mut m);
        }
        m.iter_mut().for_each(|v| *v /= n as f64);
        m
    }

    fn step(&mut self, p: &FiniteSumProblem, j: usize, inner: usize, g: &mut [f64]) -> Result<(), OptimError> {
        let d = self.d;
        let inv_n = 1.0 / p.n() as f64;
        p.grad_into(j, &self.x, g);
        let old = &mut self.table[j * d..(j + 1) * d];
        for k in 0..d {
            let estimate = g[k] - old[k] + self.table_mean[k];
            self.x[k] -= self.gamma * estimate;
            self.table_mean[k] += (g[k] - old[k]) * inv_n;
            old[k] = g[k];
        }
        check_finite(&self.x, self.epoch, inner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SagaVariant {
    /// Uniform sampling with replacement.
    UniformSaga,
    /// Indices follow a fresh permutation each epoch.
    RrSaga,
}

/// Where a SAGA epoch takes its `n` indices from.
pub enum SagaOrder<'a> {
    Uniform(&'a mut RngState),
    Permutation(&'a [usize]),
}

/// `n` SAGA steps, each `g = ∇f_j(x) − table[j] + mean(table)` followed by
/// the table update. Costs `n` gradients.
pub fn saga_family_epoch(
    p: &FiniteSumProblem,
    s: &mut SagaState,
    order: SagaOrder<'_>,
) -> Result<u64, OptimError> {
    check_gamma(s.gamma)?;
    let n = p.n();
    let mut g = vec![0.0; p.d()];
    match order {
        SagaOrder::Uniform(rng) => {
            for inner in 0..n {
                let j = rng.below(n);
                s.step(p, j, inner, &mut g)?;
            }
        }
        SagaOrder::Permutation(perm) => {
            check_permutation(perm, n)?;
            for (inner, &j) in perm.iter().enumerate() {
                s.step(p, j, inner, &mut g)?;
            }
        }
    }
    s.epoch += 1;
    Ok(n as u64)
}

/// How loop-based SVRG refreshes its control point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoopVariant {
    /// `y ← x` every `m` inner steps.
    ClassicSvrg { inner_loop: usize },
    /// `y ← x` with probability `q` after each step.
    LSvrg { q: f64 },
}

/// With-replacement SVRG state.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSvrgState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub gamma: f64,
    pub steps: u64,
    grad_at_y: Vec<f64>,
    since_refresh: usize,
}

impl LoopSvrgState {
    /// `y₀ = x₀`; computing `∇f(y₀)` costs `n` gradients.
    pub fn new(p: &FiniteSumProblem, x0: Vec<f64>, gamma: f64) -> Result<Self, OptimError> {
        check_dim(&x0, p.d())?;
        Ok(Self {
            grad_at_y: p.full_grad(&x0),
            y: x0.clone(),
            x: x0,
            gamma,
            steps: 0,
            since_refresh: 0,
        })
    }
}

/// One inner step of SVRG / L-SVRG with a uniformly drawn index. Returns the
/// gradient count: 2, plus `n` when the control point is refreshed.
pub fn loop_svrg_step(
    p: &FiniteSumProblem,
    s: &mut LoopSvrgState,
    variant: LoopVariant,
    rng: &mut RngState,
) -> Result<u64, OptimError> {
    check_gamma(s.gamma)?;
    let n = p.n();
    let d = p.d();
    let j = rng.below(n);
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    estimate_into(p, j, &s.x, &s.y, &s.grad_at_y, &mut g, &mut scratch);
    for (xk, gk) in s.x.iter_mut().zip(&g) {
        *xk -= s.gamma * gk;
    }
    let epoch = (s.steps / n as u64) as usize;
    check_finite(&s.x, epoch, (s.steps % n as u64) as usize)?;
    s.steps += 1;
    s.since_refresh += 1;
    let refresh = match variant {
        LoopVariant::ClassicSvrg { inner_loop } => {
            if inner_loop == 0 {
                return Err(OptimError::InvalidParameter("inner loop length must be positive".into()));
            }
            s.since_refresh >= inner_loop
        }
        LoopVariant::LSvrg { q } => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(OptimError::InvalidParameter(format!(
                    "refresh probability must lie in (0, 1], got {q}"
                )));
            }
            rng.bernoulli(q)
        }
    };
    if refresh {
        s.y.copy_from_slice(&s.x);
        p.full_grad_into(&s.y, &mut s.grad_at_y);
        s.since_refresh = 0;
        Ok(2 + n as u64)
    } else {
        Ok(2)
    }
}

/// One full-gradient step `x − γ∇f(x)`.
pub fn gradient_descent_step(p: &FiniteSumProblem, x: &mut [f64], gamma: f64) {
    let g = p.full_grad(x);
    for (xk, gk) in x.iter_mut().zip(&g) {
        *xk -= gamma * gk;
    }
}

#[cfg(test)]
mod tests;
