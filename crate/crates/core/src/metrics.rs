//! Variance at the optimum, Bregman divergences, the reformulated-variance
//! bound, and exact evaluators for the convergence guarantees of the
//! shuffling SVRG family.

use thiserror::Error;

use crate::linalg::{dist_sq, dot, norm_sq};
use crate::problem::FiniteSumProblem;

/// Relative slack allowed when checking a stepsize against its admissible
/// maximum.
const STEPSIZE_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("bound not applicable: {0}")]
    Precondition(String),
    #[error("missing parameter {0}")]
    MissingParameter(&'static str),
    #[error("invalid rate q = {0}; expected 0 < q < 1")]
    InvalidRate(f64),
    #[error("invalid accuracy eps = {0}; expected 0 < eps <= 1")]
    InvalidAccuracy(f64),
}

/// `σ*² = (1/n) Σᵢ ‖∇fᵢ(x*)‖²`
pub fn sigma_star_sq(p: &FiniteSumProblem, x_star: &[f64]) -> f64 {
    let mut g = vec![0.0; p.d()];
    let mut total = 0.0;
    for i in 0..p.n() {
        p.grad_into(i, x_star, &mut g);
        total += norm_sq(&g);
    }
    total / p.n() as f64
}

/// Variance at `x*` of the problem perturbed with `aᵢ = −∇fᵢ(y) + ∇f(y)`:
/// `(1/n) Σᵢ ‖∇fᵢ(x*) − ∇fᵢ(y) + ∇f(y)‖²`.
pub fn sigma_tilde_sq(p: &FiniteSumProblem, x_star: &[f64], y: &[f64]) -> f64 {
    let d = p.d();
    let full_y = p.full_grad(y);
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..p.n() {
        p.grad_into(i, x_star, &mut gx);
        p.grad_into(i, y, &mut gy);
        total += (0..d)
            .map(|j| {
                let v = gx[j] - gy[j] + full_y[j];
                v * v
            })
            .sum::<f64>();
    }
    total / p.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Outcome {
    pub sigma_tilde_sq: f64,
    /// `4L²‖y − x*‖²`
    pub bound: f64,
    pub holds: bool,
}

impl Lemma1Outcome {
    /// `σ̃*² / bound`; zero when both sides vanish.
    pub fn ratio(&self) -> f64 {
        if self.bound == 0.0 {
            if self.sigma_tilde_sq == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            self.sigma_tilde_sq / self.bound
        }
    }
}

/// Checks `σ̃*² ≤ 4L²‖y − x*‖²`, allowing floating-point noise of order
/// `1e−12` relative to the gradient scale at `x*`.
pub fn lemma1_check(p: &FiniteSumProblem, x_star: &[f64], y: &[f64]) -> Lemma1Outcome {
    let s = sigma_tilde_sq(p, x_star, y);
    let l = p.smoothness();
    let bound = 4.0 * l * l * dist_sq(y, x_star);
    let noise = 1e-24 * (1.0 + sigma_star_sq(p, x_star));
    Lemma1Outcome {
        sigma_tilde_sq: s,
        bound,
        holds: s <= bound + noise,
    }
}

/// `D_f(x, y) = f(x) − f(y) − ⟨∇f(y), x − y⟩`
pub fn bregman(p: &FiniteSumProblem, x: &[f64], y: &[f64]) -> f64 {
    let g = p.full_grad(y);
    p.full_value(x) - p.full_value(y) - inner_diff(&g, x, y)
}

/// `D_{fᵢ}(x, y)`
pub fn bregman_component(p: &FiniteSumProblem, i: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut g = vec![0.0; p.d()];
    p.grad_into(i, y, &mut g);
    p.value_unchecked(i, x) - p.value_unchecked(i, y) - inner_diff(&g, x, y)
}

fn inner_diff(g: &[f64], x: &[f64], y: &[f64]) -> f64 {
    g.iter().zip(x.iter().zip(y)).map(|(gj, (xj, yj))| gj * (xj - yj)).sum()
}

/// `f̃ᵢ(x) = fᵢ(x) + ⟨aᵢ, x⟩`
pub fn perturbed_component_value(p: &FiniteSumProblem, i: usize, a: &[f64], x: &[f64]) -> f64 {
    p.value_unchecked(i, x) + dot(a, x)
}

/// `∇f̃ᵢ(x) = ∇fᵢ(x) + aᵢ`
pub fn perturbed_component_grad(p: &FiniteSumProblem, i: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.d()];
    p.grad_into(i, x, &mut g);
    g.iter_mut().zip(a).for_each(|(gj, aj)| *gj += aj);
    g
}

/// Bregman divergence of the perturbed component, evaluated directly from
/// `f̃ᵢ` and `∇f̃ᵢ` (the linear terms are not cancelled by hand).
pub fn bregman_perturbed(p: &FiniteSumProblem, i: usize, a: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let g = perturbed_component_grad(p, i, a, y);
    perturbed_component_value(p, i, a, x) - perturbed_component_value(p, i, a, y) - inner_diff(&g, x, y)
}

/// Whether a linear perturbation leaves `D_{fᵢ}(x, y)` unchanged up to
/// floating-point cancellation.
///
/// The tolerance is `1e−10·(1 + |D|)` plus the rounding error of the
/// `⟨aᵢ, ·⟩` terms, which cancel analytically but not in floating point.
pub fn reformulation_preserves_bregman(
    p: &FiniteSumProblem,
    i: usize,
    a: &[f64],
    x: &[f64],
    y: &[f64],
) -> bool {
    let plain = bregman_component(p, i, x, y);
    let perturbed = bregman_perturbed(p, i, a, x, y);
    let linear_scale: f64 = a
        .iter()
        .zip(x.iter().zip(y))
        .map(|(aj, (xj, yj))| aj.abs() * (xj.abs() + yj.abs()))
        .sum();
    let value_scale = p.value_unchecked(i, x).abs() + p.value_unchecked(i, y).abs();
    let rounding = 8.0 * f64::EPSILON * (linear_scale + value_scale);
    (plain - perturbed).abs() <= 1e-10 * (1.0 + plain.abs()) + rounding
}

/// Which convergence guarantee a bound evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// RR/SO-SVRG, strongly convex `f`, general regime.
    T1,
    /// RR/SO-SVRG, big-data regime.
    T2,
    /// RR/SO-SVRG, strongly convex components, large `n`.
    T3,
    /// RR/SO-SVRG, convex, average iterate.
    T4,
    /// Cyclic SVRG, strongly convex `f`.
    T5,
    /// Cyclic SVRG, convex, average iterate.
    T6,
    /// RR-VR, Lyapunov with weight `γμn/4`.
    T7,
    /// RR-VR, Lyapunov with weight `δ²/p`.
    T8,
}

impl Theorem {
    /// Sublinear bounds on `f(x̂_T) − f*` rather than linear contraction.
    pub fn is_ergodic(self) -> bool {
        matches!(self, Theorem::T4 | Theorem::T6)
    }

    pub fn is_lyapunov(self) -> bool {
        matches!(self, Theorem::T7 | Theorem::T8)
    }

    pub fn label(self) -> &'static str {
        match self {
            Theorem::T1 => "t1",
            Theorem::T2 => "t2",
            Theorem::T3 => "t3",
            Theorem::T4 => "t4",
            Theorem::T5 => "t5",
            Theorem::T6 => "t6",
            Theorem::T7 => "t7",
            Theorem::T8 => "t8",
        }
    }
}

/// Parameters the bounds depend on. `delta` and `p` are only read by the
/// theorems that use them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub gamma: f64,
    pub n: usize,
    pub mu: f64,
    pub smoothness: f64,
    pub delta: Option<f64>,
    pub p: Option<f64>,
}

impl BoundParams {
    pub fn new(gamma: f64, n: usize, mu: f64, smoothness: f64) -> Self {
        Self {
            gamma,
            n,
            mu,
            smoothness,
            delta: None,
            p: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    fn delta(&self) -> Result<f64, BoundError> {
        self.delta.ok_or(BoundError::MissingParameter("delta"))
    }

    fn prob(&self) -> Result<f64, BoundError> {
        self.p.ok_or(BoundError::MissingParameter("p"))
    }
}

fn require(cond: bool, what: impl FnOnce() -> String) -> Result<(), BoundError> {
    if cond {
        Ok(())
    } else {
        Err(BoundError::Precondition(what()))
    }
}

fn require_stepsize(gamma: f64, max: f64, rule: &str) -> Result<(), BoundError> {
    require(gamma > 0.0 && gamma.is_finite(), || format!("stepsize must be positive, got {gamma}"))?;
    require(gamma <= max * (1.0 + STEPSIZE_SLACK), || {
        format!("stepsize {gamma:e} exceeds {rule} = {max:e}")
    })
}

/// Smallest `n` of the big-data regime: `(2L/μ)·1/(1 − μ/(√2 L))`.
pub fn big_data_threshold(smoothness: f64, mu: f64) -> f64 {
    2.0 * smoothness / mu / (1.0 - mu / (std::f64::consts::SQRT_2 * smoothness))
}

/// `log(1/(1−δ²)) / log(1/(1−γμ))`; `n` must exceed it for the
/// strongly-convex-component bounds.
pub fn large_n_threshold(gamma: f64, mu: f64, delta: f64) -> f64 {
    (-(1.0 - delta * delta).ln()) / (-(1.0 - gamma * mu).ln())
}

/// Side condition `δ² ≤ (1−γμ)^{n/2}(1 − (1−γμ)^{n/2})` under which the
/// strongly-convex-component rate improves to `κ√(κ/n)`.
pub fn corollary3_condition(gamma: f64, mu: f64, n: usize, delta: f64) -> bool {
    let h = (1.0 - gamma * mu).powf(n as f64 / 2.0);
    delta * delta <= h * (1.0 - h)
}

/// Maximal admissible stepsizes of each guarantee.
pub mod stepsize_limits {
    use std::f64::consts::SQRT_2;

    /// `(1/(2√2 L n))·√(μ/L)`
    pub fn t1(l: f64, mu: f64, n: usize) -> f64 {
        (mu / l).sqrt() / (2.0 * SQRT_2 * l * n as f64)
    }

    /// `1/(√2 L n)`, shared by the big-data and convex RR/SO guarantees.
    pub fn t2(l: f64, n: usize) -> f64 {
        1.0 / (SQRT_2 * l * n as f64)
    }

    /// `(δ/L)·√(μ/(2nL))`
    pub fn t3(l: f64, mu: f64, n: usize, delta: f64) -> f64 {
        delta / l * (mu / (2.0 * n as f64 * l)).sqrt()
    }

    /// `(1/(4 L n))·√(μ/L)`
    pub fn t5(l: f64, mu: f64, n: usize) -> f64 {
        (mu / l).sqrt() / (4.0 * l * n as f64)
    }

    /// `1/(2√2 L n)`, for the cyclic convex and RR-VR guarantees.
    pub fn t7(l: f64, n: usize) -> f64 {
        1.0 / (2.0 * SQRT_2 * l * n as f64)
    }

    /// `(1/(2L))·√(μ/(2nL))`
    pub fn t8(l: f64, mu: f64, n: usize) -> f64 {
        (mu / (2.0 * n as f64 * l)).sqrt() / (2.0 * l)
    }
}

/// Validated bound: a theorem, its parameters and the initial gap
/// (`‖x₀−x*‖²` or `V₀`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryBound {
    theorem: Theorem,
    params: BoundParams,
    initial_gap: f64,
}

impl TheoryBound {
    /// Fails, naming the violated inequality, when the theorem's hypotheses
    /// do not hold for `params`.
    pub fn new(theorem: Theorem, params: BoundParams, initial_gap: f64) -> Result<Self, BoundError> {
        check_preconditions(theorem, &params)?;
        require(initial_gap >= 0.0 && initial_gap.is_finite(), || {
            format!("initial gap must be finite and nonnegative, got {initial_gap}")
        })?;
        Ok(Self {
            theorem,
            params,
            initial_gap,
        })
    }

    pub fn theorem(&self) -> Theorem {
        self.theorem
    }

    pub fn params(&self) -> &BoundParams {
        &self.params
    }

    pub fn initial_gap(&self) -> f64 {
        self.initial_gap
    }

    /// Per-epoch contraction factor of the linear-rate guarantees.
    pub fn contraction_factor(&self) -> Option<f64> {
        let BoundParams { gamma, n, mu, .. } = self.params;
        let n_f = n as f64;
        match self.theorem {
            Theorem::T1 | Theorem::T2 | Theorem::T5 => Some(1.0 - gamma * n_f * mu / 2.0),
            Theorem::T3 => Some((1.0 - gamma * mu).powi(n as i32) + self.params.delta.unwrap_or(0.0).powi(2)),
            Theorem::T7 | Theorem::T8 => {
                rr_vr_factors(self.theorem, &self.params).ok().map(|(q1, q2)| q1.max(q2))
            }
            Theorem::T4 | Theorem::T6 => None,
        }
    }

    /// Value of the bound after `epochs` epochs.
    pub fn contraction_bound(&self, epochs: usize) -> Result<f64, BoundError> {
        let BoundParams { gamma, n, .. } = self.params;
        match self.theorem {
            Theorem::T4 | Theorem::T6 => {
                require(epochs >= 1, || "average-iterate bounds start at T = 1".to_string())?;
                let c = if self.theorem == Theorem::T4 { 1.5 } else { 2.0 };
                Ok(c * self.initial_gap / (gamma * n as f64 * epochs as f64))
            }
            _ => {
                let q = self.contraction_factor().expect("linear-rate theorem");
                Ok(q.powi(epochs as i32) * self.initial_gap)
            }
        }
    }
}

fn check_preconditions(theorem: Theorem, p: &BoundParams) -> Result<(), BoundError> {
    let BoundParams {
        gamma,
        n,
        mu,
        smoothness: l,
        ..
    } = *p;
    require(n >= 1, || "need n >= 1".to_string())?;
    require(l > 0.0 && l.is_finite(), || format!("need L > 0, got {l}"))?;
    let strongly_convex = || {
        require(mu > 0.0 && mu <= l, || format!("need 0 < mu <= L, got mu = {mu}, L = {l}"))
    };
    let n_f = n as f64;
    match theorem {
        Theorem::T1 => {
            strongly_convex()?;
            require_stepsize(gamma, stepsize_limits::t1(l, mu, n), "sqrt(mu/L)/(2 sqrt2 L n)")
        }
        Theorem::T2 => {
            strongly_convex()?;
            let threshold = big_data_threshold(l, mu);
            require(n_f >= threshold, || {
                format!("big-data regime needs n >= (2L/mu)/(1 - mu/(sqrt2 L)) = {threshold:.4}, got n = {n}")
            })?;
            require_stepsize(gamma, stepsize_limits::t2(l, n), "1/(sqrt2 L n)")
        }
        Theorem::T3 => {
            strongly_convex()?;
            let delta = p.delta()?;
            require(delta > 0.0 && delta < 1.0, || format!("need 0 < delta < 1, got {delta}"))?;
            require_stepsize(gamma, stepsize_limits::t3(l, mu, n, delta), "(delta/L) sqrt(mu/(2nL))")?;
            let threshold = large_n_threshold(gamma, mu, delta);
            require(n_f > threshold, || {
                format!("need n > log(1/(1-delta^2))/log(1/(1-gamma mu)) = {threshold:.4}, got n = {n}")
            })
        }
        Theorem::T4 => {
            require(mu >= 0.0, || format!("need mu >= 0, got {mu}"))?;
            require_stepsize(gamma, stepsize_limits::t2(l, n), "1/(sqrt2 L n)")
        }
        Theorem::T5 => {
            strongly_convex()?;
            require_stepsize(gamma, stepsize_limits::t5(l, mu, n), "sqrt(mu/L)/(4 L n)")
        }
        Theorem::T6 => {
            require(mu >= 0.0, || format!("need mu >= 0, got {mu}"))?;
            require_stepsize(gamma, stepsize_limits::t7(l, n), "1/(2 sqrt2 L n)")
        }
        Theorem::T7 => {
            strongly_convex()?;
            let prob = p.prob()?;
            let kappa = l / mu;
            require(n_f > kappa, || format!("need n > kappa = {kappa:.4}, got n = {n}"))?;
            require(prob > kappa / n_f && prob < 1.0, || {
                format!("need kappa/n = {:.4} < p < 1, got p = {prob}", kappa / n_f)
            })?;
            require_stepsize(gamma, stepsize_limits::t7(l, n), "1/(2 sqrt2 L n)")
        }
        Theorem::T8 => {
            strongly_convex()?;
            let delta = p.delta()?;
            let prob = p.prob()?;
            require(delta > 0.5 && delta < std::f64::consts::FRAC_1_SQRT_2, || {
                format!("need 1/2 < delta < 1/sqrt2, got {delta}")
            })?;
            require(prob > 0.0 && prob < 1.0, || format!("need 0 < p < 1, got {prob}"))?;
            require_stepsize(gamma, stepsize_limits::t8(l, mu, n), "(1/(2L)) sqrt(mu/(2nL))")?;
            let threshold = large_n_threshold(gamma, mu, delta);
            require(n_f > threshold, || {
                format!("need n > log(1/(1-delta^2))/log(1/(1-gamma mu)) = {threshold:.4}, got n = {n}")
            })
        }
    }
}

/// `(q₁, q₂)` of the RR-VR guarantees, without checking their hypotheses.
///
/// - T7: `q₁ = 1 − (γμn/4)(1 − p/2)`, `q₂ = 1 − p + (8/μ)γ²L³n`
/// - T8: `q₁ = (1−γμ)ⁿ + δ²`, `q₂ = 1 − p(1 − 2γ²L³n/(μδ²))`
pub fn rr_vr_factors(theorem: Theorem, params: &BoundParams) -> Result<(f64, f64), BoundError> {
    let BoundParams {
        gamma,
        n,
        mu,
        smoothness: l,
        ..
    } = *params;
    let n_f = n as f64;
    let prob = params.prob()?;
    match theorem {
        Theorem::T7 => {
            let q1 = 1.0 - gamma * mu * n_f / 4.0 * (1.0 - prob / 2.0);
            let q2 = 1.0 - prob + 8.0 / mu * gamma * gamma * l.powi(3) * n_f;
            Ok((q1, q2))
        }
        Theorem::T8 => {
            let delta = params.delta()?;
            let q1 = (1.0 - gamma * mu).powi(n as i32) + delta * delta;
            let q2 = 1.0 - prob * (1.0 - 2.0 * gamma * gamma * l.powi(3) * n_f / (mu * delta * delta));
            Ok((q1, q2))
        }
        other => Err(BoundError::Precondition(format!(
            "{} is not an RR-VR guarantee",
            other.label()
        ))),
    }
}

/// Weight on `‖y − x*‖²` in the RR-VR Lyapunov function: `γμn/4` (T7) or
/// `δ²/p` (T8).
pub fn lyapunov_weight(theorem: Theorem, params: &BoundParams) -> Result<f64, BoundError> {
    match theorem {
        Theorem::T7 => Ok(params.gamma * params.mu * params.n as f64 / 4.0),
        Theorem::T8 => Ok(params.delta()?.powi(2) / params.prob()?),
        other => Err(BoundError::Precondition(format!(
            "{} has no Lyapunov function",
            other.label()
        ))),
    }
}

/// `V = ‖x − x*‖² + w‖y − x*‖²`
pub fn lyapunov_value(
    theorem: Theorem,
    x: &[f64],
    y: &[f64],
    x_star: &[f64],
    params: &BoundParams,
) -> Result<f64, BoundError> {
    let w = lyapunov_weight(theorem, params)?;
    Ok(dist_sq(x, x_star) + w * dist_sq(y, x_star))
}

/// `max(q₁, q₂)^T · V₀`, after checking the theorem's hypotheses.
pub fn rr_vr_bound(theorem: Theorem, epochs: usize, v0: f64, params: &BoundParams) -> Result<f64, BoundError> {
    if !theorem.is_lyapunov() {
        return Err(BoundError::Precondition(format!(
            "{} is not an RR-VR guarantee",
            theorem.label()
        )));
    }
    TheoryBound::new(theorem, *params, v0)?.contraction_bound(epochs)
}

fn check_rate(q: f64, eps: f64) -> Result<(), BoundError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(BoundError::InvalidRate(q));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(BoundError::InvalidAccuracy(eps));
    }
    Ok(())
}

/// Smallest integer `T` with `(1 − q)^T ≤ ε`.
pub fn iteration_complexity(q: f64, eps: f64) -> Result<u64, BoundError> {
    check_rate(q, eps)?;
    if eps == 1.0 {
        return Ok(0);
    }
    let estimate = (eps.ln() / (1.0 - q).ln()).ceil().max(0.0) as u64;
    // correct for rounding in the logarithms
    let holds = |t: u64| (1.0 - q).powf(t as f64) <= eps;
    let mut t = estimate;
    while t > 0 && holds(t - 1) {
        t -= 1;
    }
    while !holds(t) {
        t += 1;
    }
    Ok(t)
}

/// `⌈(1/q)·ln(1/ε)⌉`, the sufficient epoch count obtained from `1 − q ≤ e^{−q}`.
/// Always at least [`iteration_complexity`].
pub fn rate_lemma_epochs(q: f64, eps: f64) -> Result<u64, BoundError> {
    check_rate(q, eps)?;
    Ok(((1.0 / eps).ln() / q).ceil() as u64)
}

/// Measurements at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub grad_evals: u64,
    /// `‖x_t − x*‖²`
    pub dist_sq: f64,
    /// `f(x_t) − f*`
    pub func_gap: f64,
    /// `‖∇f(x_t)‖²`
    pub grad_norm_sq: f64,
    /// `f(x̂_t) − f*` for the running average of `x_1, …, x_t`; at epoch 0 the
    /// gap of `x₀`.
    pub ergodic_gap: f64,
    pub bound: Option<f64>,
}

/// Reference point the records are measured against.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub x_star: &'a [f64],
    pub f_star: f64,
}

pub struct EpochContext<'a> {
    pub epoch: usize,
    pub grad_evals: u64,
    pub x: &'a [f64],
    /// Running average iterate, `None` at epoch 0.
    pub average: Option<&'a [f64]>,
    pub bound: Option<f64>,
}

pub fn record_epoch(p: &FiniteSumProblem, reference: Reference<'_>, ctx: EpochContext<'_>) -> TraceRecord {
    let func_gap = p.full_value(ctx.x) - reference.f_star;
    let ergodic_gap = match ctx.average {
        Some(avg) => p.full_value(avg) - reference.f_star,
        None => func_gap,
    };
    TraceRecord {
        epoch: ctx.epoch,
        grad_evals: ctx.grad_evals,
        dist_sq: dist_sq(ctx.x, reference.x_star),
        func_gap,
        grad_norm_sq: norm_sq(&p.full_grad(ctx.x)),
        ergodic_gap,
        bound: ctx.bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::problem::{synth_ridge, Dataset};
    use crate::sampling::RngState;

    fn two_quadratics() -> FiniteSumProblem {
        let a = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        FiniteSumProblem::ridge(Dataset::new(a, vec![1.0, -1.0], "pair").unwrap(), 0.0).unwrap()
    }

    fn identity_quadratic() -> FiniteSumProblem {
        // zero design with λ = 1 leaves f(x) = ½‖x‖²
        let a = DenseMatrix::zeros(1, 3);
        FiniteSumProblem::ridge(Dataset::new(a, vec![0.0], "id").unwrap(), 1.0).unwrap()
    }

    #[test]
    fn sigma_star_examples() {
        let p = two_quadratics();
        assert_eq!(sigma_star_sq(&p, &[0.0]), 1.0);
        let single = FiniteSumProblem::ridge(
            Dataset::new(DenseMatrix::from_rows(&[vec![2.0]]).unwrap(), vec![4.0], "s").unwrap(),
            0.0,
        )
        .unwrap();
        assert_eq!(sigma_star_sq(&single, &[2.0]), 0.0);
        // pointwise definition away from the optimum: gradients 2 and 4
        assert_eq!(sigma_star_sq(&p, &[3.0]), 10.0);
    }

    #[test]
    fn sigma_tilde_vanishes_at_optimum() {
        let p = synth_ridge(20, 4, 10.0, 3).unwrap();
        let x_star = crate::oracle::exact_ridge_optimum(&p).unwrap().x_star;
        assert!(sigma_tilde_sq(&p, &x_star, &x_star) < 1e-28);
        let out = lemma1_check(&p, &x_star, &x_star);
        assert!(out.holds);
    }

    #[test]
    fn sigma_tilde_single_component() {
        let p = FiniteSumProblem::ridge(
            Dataset::new(DenseMatrix::from_rows(&[vec![2.0, 1.0]]).unwrap(), vec![4.0], "s").unwrap(),
            0.3,
        )
        .unwrap();
        let x_star = crate::oracle::exact_ridge_optimum(&p).unwrap().x_star;
        for y in [[1.0, -1.0], [10.0, 3.0]] {
            assert!(sigma_tilde_sq(&p, &x_star, &y) < 1e-20);
        }
    }

    #[test]
    fn sigma_tilde_continuity() {
        let p = synth_ridge(30, 5, 20.0, 8).unwrap();
        let x_star = crate::oracle::exact_ridge_optimum(&p).unwrap().x_star;
        let u: Vec<f64> = vec![0.6, -0.8, 0.0, 0.0, 0.0];
        let l = p.smoothness();
        for k in 1..=6 {
            let h = 10f64.powi(-k);
            let y: Vec<f64> = x_star.iter().zip(&u).map(|(x, ui)| x + h * ui).collect();
            assert!(sigma_tilde_sq(&p, &x_star, &y) <= 4.0 * l * l * h * h * (1.0 + 1e-9));
        }
    }

    #[test]
    fn bregman_examples() {
        let p = identity_quadratic();
        let x = [1.0, 2.0, -1.0];
        let y = [0.5, -1.0, 3.0];
        assert_eq!(bregman(&p, &x, &x), 0.0);
        let expected = 0.5 * dist_sq(&x, &y);
        assert!((bregman(&p, &x, &y) - expected).abs() < 1e-14);
    }

    #[test]
    fn bregman_sandwich() {
        let mut rng = RngState::new(11);
        for case in 0..500 {
            let p = synth_ridge(20, 4, 5.0 + 50.0 * rng.uniform(), case).unwrap();
            let x: Vec<f64> = (0..4).map(|_| 3.0 * rng.gaussian()).collect();
            let y: Vec<f64> = (0..4).map(|_| 3.0 * rng.gaussian()).collect();
            let dfd = bregman(&p, &x, &y);
            let r = dist_sq(&x, &y);
            let tol = 1e-12 * (1.0 + dfd.abs());
            assert!(p.strong_convexity() / 2.0 * r <= dfd + tol, "case {case}");
            assert!(dfd <= p.smoothness() / 2.0 * r + tol, "case {case}");
        }
    }

    #[test]
    fn bregman_at_optimum_is_function_gap() {
        let p = synth_ridge(20, 4, 30.0, 2).unwrap();
        let cert = crate::oracle::exact_ridge_optimum(&p).unwrap();
        let x = [1.0, -2.0, 0.5, 0.0];
        let gap = p.full_value(&x) - cert.f_star;
        assert!((bregman(&p, &x, &cert.x_star) - gap).abs() < 1e-12);
    }

    #[test]
    fn perturbation_preserves_bregman() {
        let p = synth_ridge(10, 3, 10.0, 4).unwrap();
        let mut rng = RngState::new(5);
        for scale in [0.0, 1.0, 1e3, 1e6] {
            for _ in 0..20 {
                let i = rng.below(10);
                let dir: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                let norm = norm_sq(&dir).sqrt();
                let a: Vec<f64> = dir.iter().map(|v| scale * v / norm).collect();
                let x: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                let y: Vec<f64> = (0..3).map(|_| rng.gaussian()).collect();
                assert!(reformulation_preserves_bregman(&p, i, &a, &x, &y), "scale {scale}");
            }
        }
        // aᵢ = 0 is exact
        let zero = [0.0; 3];
        let x = [1.0, 2.0, 3.0];
        let y = [0.0, 1.0, -1.0];
        assert_eq!(bregman_perturbed(&p, 0, &zero, &x, &y), bregman_component(&p, 0, &x, &y));
    }

    fn params() -> BoundParams {
        BoundParams::new(stepsize_limits::t1(1.0, 0.01, 100), 100, 0.01, 1.0)
    }

    #[test]
    fn t1_bound_evaluation() {
        // γnμ/2 = 0.1 → factor 0.9
        let gamma = 0.2 / (100.0 * 0.01);
        let p = BoundParams { gamma, ..params() };
        let direct = TheoryBound {
            theorem: Theorem::T1,
            params: p,
            initial_gap: 1.0,
        };
        assert!((direct.contraction_bound(2).unwrap() - 0.81).abs() < 1e-15);
        // that γ is far above the admissible one
        assert!(matches!(TheoryBound::new(Theorem::T1, p, 1.0), Err(BoundError::Precondition(_))));
    }

    #[test]
    fn linear_bounds_start_at_gap() {
        let b = TheoryBound::new(Theorem::T1, params(), 2.5).unwrap();
        assert_eq!(b.contraction_bound(0).unwrap(), 2.5);
        let mut prev = f64::INFINITY;
        for t in 0..100 {
            let v = b.contraction_bound(t).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn ergodic_bound_scales_as_inverse_t() {
        let gamma = stepsize_limits::t2(1.0, 50);
        let b = TheoryBound::new(Theorem::T4, BoundParams::new(gamma, 50, 0.0, 1.0), 4.0).unwrap();
        assert!(b.contraction_bound(0).is_err());
        let b10 = b.contraction_bound(10).unwrap();
        let b20 = b.contraction_bound(20).unwrap();
        assert!((b10 / b20 - 2.0).abs() < 1e-14);
        assert!((b10 - 3.0 * 4.0 / (2.0 * gamma * 50.0 * 10.0)).abs() < 1e-12);
        let b6 = TheoryBound::new(Theorem::T6, BoundParams::new(stepsize_limits::t7(1.0, 50), 50, 0.0, 1.0), 4.0)
            .unwrap();
        let mut prev = f64::INFINITY;
        for t in 1..50 {
            let v = b6.contraction_bound(t).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn big_data_regime_rejected() {
        let p = BoundParams::new(stepsize_limits::t2(1.0, 10), 10, 0.1, 1.0);
        let err = TheoryBound::new(Theorem::T2, p, 1.0).unwrap_err();
        assert!(err.to_string().contains("big-data"), "{err}");
        assert!((big_data_threshold(1.0, 0.1) - 20.0 / (1.0 - 0.1 / std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn t3_requires_large_n() {
        let gamma = stepsize_limits::t3(1.0, 0.5, 4, 0.5);
        let p = BoundParams::new(gamma, 4, 0.5, 1.0).with_delta(0.5);
        let threshold = large_n_threshold(gamma, 0.5, 0.5);
        assert!(threshold > 4.0);
        assert!(TheoryBound::new(Theorem::T3, p, 1.0).is_err());
        let n = 2000;
        let gamma = stepsize_limits::t3(1.0, 0.5, n, 0.5);
        let p = BoundParams::new(gamma, n, 0.5, 1.0).with_delta(0.5);
        let b = TheoryBound::new(Theorem::T3, p, 1.0).unwrap();
        let q = b.contraction_factor().unwrap();
        assert!((q - ((1.0 - gamma * 0.5).powi(n as i32) + 0.25)).abs() < 1e-15);
        assert!(q < 1.0);
    }

    #[test]
    fn t7_factors() {
        // γμn/4 = 0.1, p = 0.5 → q₁ = 0.925
        let p = BoundParams::new(0.4 / (0.5 * 8.0), 8, 0.5, 1.0).with_p(0.5);
        let (q1, _) = rr_vr_factors(Theorem::T7, &p).unwrap();
        assert!((q1 - 0.925).abs() < 1e-15);
    }

    #[test]
    fn t7_q2_below_one_in_regime() {
        // with γ = 1/(2√2Ln), q₂ = 1 − p + κ/n
        let (l, mu, n) = (1.0, 0.1, 100);
        let gamma = stepsize_limits::t7(l, n);
        let p = BoundParams::new(gamma, n, mu, l).with_p(0.5);
        let (q1, q2) = rr_vr_factors(Theorem::T7, &p).unwrap();
        assert!((q2 - (1.0 - 0.5 + 10.0 / 100.0)).abs() < 1e-12);
        assert!(q1 < 1.0);
        let b = rr_vr_bound(Theorem::T7, 3, 2.0, &p).unwrap();
        assert!((b - q1.max(q2).powi(3) * 2.0).abs() < 1e-15);
        assert!(rr_vr_bound(Theorem::T7, 3, 2.0, &p.with_p(0.05)).is_err());
        assert!(rr_vr_bound(Theorem::T7, 3, 2.0, &p.with_p(1.0)).is_err());
    }

    #[test]
    fn t8_regime() {
        let (l, mu, n) = (1.0, 0.5, 5000);
        let gamma = stepsize_limits::t8(l, mu, n);
        let p = BoundParams::new(gamma, n, mu, l).with_p(0.5).with_delta(0.6);
        assert!(rr_vr_bound(Theorem::T8, 1, 1.0, &p).is_ok());
        assert!(rr_vr_bound(Theorem::T8, 1, 1.0, &p.with_delta(0.4)).is_err());
        assert!(rr_vr_bound(Theorem::T8, 1, 1.0, &BoundParams { delta: None, ..p }).is_err());
    }

    #[test]
    fn lyapunov_values() {
        let p = BoundParams::new(0.01, 10, 0.2, 1.0).with_p(0.5).with_delta(0.6);
        let xs = [1.0, 1.0];
        assert_eq!(lyapunov_value(Theorem::T7, &xs, &xs, &xs, &p).unwrap(), 0.0);
        let x = [2.0, 1.0];
        let y = [1.0, 3.0];
        let v = lyapunov_value(Theorem::T7, &x, &y, &xs, &p).unwrap();
        assert!((v - (1.0 + 0.01 * 0.2 * 10.0 / 4.0 * 4.0)).abs() < 1e-15);
        let v = lyapunov_value(Theorem::T8, &x, &y, &xs, &p).unwrap();
        assert!((v - (1.0 + 0.36 / 0.5 * 4.0)).abs() < 1e-14);
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(iteration_complexity(0.5, 1.0).unwrap(), 0);
        assert_eq!(rate_lemma_epochs(0.5, 1.0).unwrap(), 0);
        assert_eq!(rate_lemma_epochs(0.5, 0.01).unwrap(), 10);
        assert_eq!(rate_lemma_epochs(0.1, 1e-6).unwrap(), 139);
        // exact minima: 0.5⁷ ≈ 0.0078, 0.9¹³² ≈ 9.3e−7
        assert_eq!(iteration_complexity(0.5, 0.01).unwrap(), 7);
        assert_eq!(iteration_complexity(0.1, 1e-6).unwrap(), 132);
        assert!(iteration_complexity(1.0, 0.1).is_err());
        assert!(iteration_complexity(0.5, 0.0).is_err());
        assert!(rate_lemma_epochs(0.0, 0.5).is_err());
        for q in [0.01, 0.2, 0.7, 0.99] {
            for eps in [1e-9, 1e-3, 0.3, 0.9] {
                assert!(rate_lemma_epochs(q, eps).unwrap() >= iteration_complexity(q, eps).unwrap());
            }
        }
    }

    #[test]
    fn corollary3_side_condition() {
        // h = (1−γμ)^{n/2} = 0.5 gives h(1−h) = 0.25
        let gamma_mu = 1.0 - 0.5f64.powf(2.0 / 10.0);
        assert!(corollary3_condition(gamma_mu, 1.0, 10, 0.49));
        assert!(!corollary3_condition(gamma_mu, 1.0, 10, 0.51));
    }
}
