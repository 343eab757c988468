use thiserror::Error;

use crate::linalg::dist_sq;
use crate::metrics::{
    lyapunov_weight, record_epoch, BoundError, BoundParams, EpochContext, Reference, Theorem, TheoryBound,
    TraceRecord,
};
use crate::problem::FiniteSumProblem;
use crate::sampling::{PermutationStrategy, RngState, ShuffleMode};

use super::{
    loop_svrg_step, rr_sgd_epoch, rr_vr_epoch, saga_family_epoch, svrg_epoch, theoretical_stepsize, ControlUpdate,
    LoopSvrgState, LoopVariant, OptimError, RrVrState, SagaOrder, SagaState, SgdState, StepsizeError, StepsizeRule,
    SvrgState,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    RrSvrg,
    SoSvrg,
    CyclicSvrg,
    RrVr { p: f64, update_rule: ControlUpdate },
    RrSgd,
    /// With-replacement SVRG refreshing every `inner_loop` steps.
    Svrg { inner_loop: usize },
    /// Loopless SVRG refreshing with probability `q` per step.
    LSvrg { q: f64 },
    Saga,
    RrSaga,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::RrSvrg => "rr-svrg",
            Algorithm::SoSvrg => "so-svrg",
            Algorithm::CyclicSvrg => "cyclic-svrg",
            Algorithm::RrVr { .. } => "rr-vr",
            Algorithm::RrSgd => "rr-sgd",
            Algorithm::Svrg { .. } => "svrg",
            Algorithm::LSvrg { .. } => "l-svrg",
            Algorithm::Saga => "saga",
            Algorithm::RrSaga => "rr-saga",
        }
    }

    /// Whether `theorem` is a guarantee for this method.
    pub fn covered_by(&self, theorem: Theorem) -> bool {
        use Theorem::*;
        match self {
            Algorithm::RrSvrg | Algorithm::SoSvrg => matches!(theorem, T1 | T2 | T3 | T4),
            Algorithm::CyclicSvrg => matches!(theorem, T5 | T6),
            Algorithm::RrVr { .. } => matches!(theorem, T7 | T8),
            _ => false,
        }
    }
}

/// Which bound, if any, the trace carries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BoundSelection {
    /// The theorem the stepsize rule comes from, when it covers the method.
    #[default]
    Auto,
    None,
    Theorem(Theorem),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub rule: StepsizeRule,
    pub epochs: usize,
    pub seed: u64,
    /// Defaults to the zero vector.
    pub x0: Option<Vec<f64>>,
    pub bound: BoundSelection,
    /// `δ` for bounds that need one when the rule does not carry it.
    pub delta: Option<f64>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, rule: StepsizeRule, epochs: usize, seed: u64) -> Self {
        Self {
            algorithm,
            rule,
            epochs,
            seed,
            x0: None,
            bound: BoundSelection::Auto,
            delta: None,
        }
    }
}

/// Per-epoch records of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub gamma: f64,
    pub theorem: Option<Theorem>,
    /// Why no bound is attached, when one was requested but does not apply.
    pub bound_note: Option<String>,
    /// Final iterate.
    pub x: Vec<f64>,
}

impl Trace {
    pub fn initial_dist_sq(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.dist_sq)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{source}")]
    Diverged {
        partial: Box<Trace>,
        #[source]
        source: OptimError,
    },
    #[error("stepsize: {0}")]
    Stepsize(#[from] StepsizeError),
    #[error("{0}")]
    Optim(OptimError),
    #[error("invalid run configuration: {0}")]
    Config(String),
}

enum Method {
    Shuffled(SvrgState, PermutationStrategy),
    RrVr(RrVrState, PermutationStrategy),
    Sgd(SgdState, PermutationStrategy),
    Loop(LoopSvrgState, LoopVariant),
    Saga(SagaState, Option<PermutationStrategy>),
}

impl Method {
    fn x(&self) -> &[f64] {
        match self {
            Method::Shuffled(s, _) => &s.x,
            Method::RrVr(s, _) => &s.x,
            Method::Sgd(s, _) => &s.x,
            Method::Loop(s, _) => &s.x,
            Method::Saga(s, _) => &s.x,
        }
    }
}

fn build_bound(
    p: &FiniteSumProblem,
    config: &RunConfig,
    gamma: f64,
    dist0: f64,
) -> (Option<(TheoryBound, Theorem)>, Option<String>) {
    let (l, mu, n) = (p.smoothness(), p.strong_convexity(), p.n());
    let theorem = match config.bound {
        BoundSelection::None => return (None, None),
        BoundSelection::Theorem(t) => t,
        BoundSelection::Auto => match config.rule.theorem(l, mu, n) {
            Some(t) if config.algorithm.covered_by(t) => t,
            _ => return (None, None),
        },
    };
    if !config.algorithm.covered_by(theorem) {
        return (
            None,
            Some(format!("{} does not cover {}", theorem.label(), config.algorithm.label())),
        );
    }
    let mut params = BoundParams::new(gamma, n, mu, l);
    if let Some(delta) = config.rule.delta().or(config.delta) {
        params = params.with_delta(delta);
    }
    if let Algorithm::RrVr { p: prob, .. } = config.algorithm {
        params = params.with_p(prob);
    }
    // x₀ = y₀, so V₀ = (1 + w)‖x₀ − x*‖²
    let gap = if theorem.is_lyapunov() {
        match lyapunov_weight(theorem, &params) {
            Ok(w) => (1.0 + w) * dist0,
            Err(e) => return (None, Some(e.to_string())),
        }
    } else {
        dist0
    };
    match TheoryBound::new(theorem, params, gap) {
        Ok(b) => (Some((b, theorem)), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn bound_at(bound: &Option<(TheoryBound, Theorem)>, epoch: usize) -> Option<f64> {
    bound.as_ref().and_then(|(b, _)| match b.contraction_bound(epoch) {
        Ok(v) => Some(v),
        Err(BoundError::Precondition(_)) => None,
        Err(_) => None,
    })
}

/// Runs `config.epochs` epochs and records metrics at every epoch boundary,
/// measured against `reference`.
///
/// Deterministic in `(problem, config)`: all randomness comes from one
/// SplitMix64 stream seeded with `config.seed`. Gradient counts follow the
/// methods' cost model; SAGA's table and loop-SVRG's first full gradient are
/// charged at epoch 0.
pub fn run(p: &FiniteSumProblem, reference: Reference<'_>, config: &RunConfig) -> Result<Trace, RunError> {
    let n = p.n();
    let d = p.d();
    let gamma = theoretical_stepsize(&config.rule, p.smoothness(), p.strong_convexity(), n)?;
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    if x0.len() != d {
        return Err(RunError::Config(format!("x0 has length {}, expected {d}", x0.len())));
    }
    if reference.x_star.len() != d {
        return Err(RunError::Config("reference point has the wrong dimension".into()));
    }
    let mut rng = RngState::new(config.seed);
    let dist0 = dist_sq(&x0, reference.x_star);
    let (bound, bound_note) = build_bound(p, config, gamma, dist0);

    let mut grad_evals = 0u64;
    let mut method = match config.algorithm {
        Algorithm::RrSvrg | Algorithm::SoSvrg | Algorithm::CyclicSvrg => {
            let mode = match config.algorithm {
                Algorithm::RrSvrg => ShuffleMode::RandomReshuffle,
                Algorithm::SoSvrg => ShuffleMode::ShuffleOnce,
                _ => ShuffleMode::Cyclic,
            };
            Method::Shuffled(SvrgState::new(x0, gamma), PermutationStrategy::new(mode, n))
        }
        Algorithm::RrVr { p: prob, update_rule } => Method::RrVr(
            RrVrState::new(x0, gamma, prob, update_rule).map_err(RunError::Optim)?,
            PermutationStrategy::new(ShuffleMode::RandomReshuffle, n),
        ),
        Algorithm::RrSgd => Method::Sgd(
            SgdState { x: x0, gamma, epoch: 0 },
            PermutationStrategy::new(ShuffleMode::RandomReshuffle, n),
        ),
        Algorithm::Svrg { inner_loop } => {
            grad_evals += n as u64;
            Method::Loop(
                LoopSvrgState::new(p, x0, gamma).map_err(RunError::Optim)?,
                LoopVariant::ClassicSvrg { inner_loop },
            )
        }
        Algorithm::LSvrg { q } => {
            grad_evals += n as u64;
            Method::Loop(LoopSvrgState::new(p, x0, gamma).map_err(RunError::Optim)?, LoopVariant::LSvrg { q })
        }
        Algorithm::Saga | Algorithm::RrSaga => {
            grad_evals += n as u64;
            let order = (config.algorithm == Algorithm::RrSaga)
                .then(|| PermutationStrategy::new(ShuffleMode::RandomReshuffle, n));
            Method::Saga(SagaState::new(p, x0, gamma).map_err(RunError::Optim)?, order)
        }
    };

    let mut records = Vec::with_capacity(config.epochs + 1);
    records.push(record_epoch(
        p,
        reference,
        EpochContext {
            epoch: 0,
            grad_evals,
            x: method.x(),
            average: None,
            bound: bound_at(&bound, 0),
        },
    ));
    let mut running_sum = vec![0.0; d];
    let mut average = vec![0.0; d];

    for epoch in 0..config.epochs {
        let step = match &mut method {
            Method::Shuffled(s, strategy) => {
                let perm = strategy.next_epoch_permutation(epoch, &mut rng);
                svrg_epoch(p, &perm, s)
            }
            Method::RrVr(s, strategy) => {
                let perm = strategy.next_epoch_permutation(epoch, &mut rng);
                rr_vr_epoch(p, &perm, s, &mut rng).map(|e| e.grad_evals)
            }
            Method::Sgd(s, strategy) => {
                let perm = strategy.next_epoch_permutation(epoch, &mut rng);
                rr_sgd_epoch(p, &perm, s)
            }
            Method::Loop(s, variant) => {
                let mut evals = 0;
                let mut result = Ok(0);
                for _ in 0..n {
                    match loop_svrg_step(p, s, *variant, &mut rng) {
                        Ok(e) => evals += e,
                        Err(e) => {
                            result = Err(e);
                            break;
                        }
                    }
                }
                result.map(|_| evals)
            }
            Method::Saga(s, order) => match order {
                Some(strategy) => {
                    let perm = strategy.next_epoch_permutation(epoch, &mut rng);
                    saga_family_epoch(p, s, SagaOrder::Permutation(&perm))
                }
                None => saga_family_epoch(p, s, SagaOrder::Uniform(&mut rng)),
            },
        };
        match step {
            Ok(evals) => grad_evals += evals,
            Err(source) => {
                let x = method.x().to_vec();
                return Err(RunError::Diverged {
                    partial: Box::new(Trace {
                        records,
                        gamma,
                        theorem: bound.map(|(_, t)| t),
                        bound_note,
                        x,
                    }),
                    source,
                });
            }
        }
        let t = epoch + 1;
        for (s, xi) in running_sum.iter_mut().zip(method.x()) {
            *s += xi;
        }
        for (a, s) in average.iter_mut().zip(&running_sum) {
            *a = s / t as f64;
        }
        records.push(record_epoch(
            p,
            reference,
            EpochContext {
                epoch: t,
                grad_evals,
                x: method.x(),
                average: Some(&average),
                bound: bound_at(&bound, t),
            },
        ));
    }
    Ok(Trace {
        records,
        gamma,
        theorem: bound.map(|(_, t)| t),
        bound_note,
        x: method.x().to_vec(),
    })
}
