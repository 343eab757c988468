use thiserror::Error;

use crate::metrics::{big_data_threshold, large_n_threshold, stepsize_limits, Theorem};

/// Grid of stepsizes `{1/L, 1/(2L), 1/(3L), 1/(5L), 1/(10L)}` as multiples of `1/L`.
pub const GRID_MULTIPLIERS: [f64; 5] = [1.0, 0.5, 1.0 / 3.0, 0.2, 0.1];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepsizeError {
    #[error("regime violated: {0}")]
    Regime(String),
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("stepsize rule needs a grid search; resolve candidates instead")]
    NeedsGridSearch,
}

/// How the stepsize `γ` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StepsizeRule {
    /// `(1/(2√2 L n))·√(μ/L)`
    Theorem1,
    /// `1/(√2 L n)`; only in the big-data regime.
    Theorem2BigData,
    /// `(δ/L)·√(μ/(2nL))`, with the large-`n` condition checked.
    Theorem3 { delta: f64 },
    /// `1/(√2 L n)` for convex problems.
    Theorem4Convex,
    /// `(1/(4 L n))·√(μ/L)`
    Theorem5Cyclic,
    /// `1/(2√2 L n)` for cyclic passes on convex problems.
    Theorem6CyclicConvex,
    /// `1/(2√2 L n)`
    Theorem7,
    /// `(1/(2L))·√(μ/(2nL))`, with the large-`n` condition checked.
    Theorem8 { delta: f64 },
    /// The big-data stepsize `T2` when `n` qualifies, `T1` otherwise.
    ShuffledSvrgTheory,
    /// `μ/(11 L² n)` for RR-SAGA.
    RrSagaTheory,
    /// Best of `multiplier/L` for each multiplier, chosen by running them.
    GridBest(Vec<f64>),
    Manual(f64),
}

impl StepsizeRule {
    pub fn default_grid() -> Self {
        StepsizeRule::GridBest(GRID_MULTIPLIERS.to_vec())
    }

    /// Candidate stepsizes of a grid rule.
    pub fn grid_candidates(&self, smoothness: f64) -> Option<Vec<f64>> {
        match self {
            StepsizeRule::GridBest(mults) => Some(mults.iter().map(|m| m / smoothness).collect()),
            _ => None,
        }
    }

    /// The guarantee this rule's stepsize is derived from, for the given
    /// constants. `None` for rules not tied to a theorem.
    pub fn theorem(&self, smoothness: f64, mu: f64, n: usize) -> Option<Theorem> {
        Some(match self {
            StepsizeRule::Theorem1 => Theorem::T1,
            StepsizeRule::Theorem2BigData => Theorem::T2,
            StepsizeRule::Theorem3 { .. } => Theorem::T3,
            StepsizeRule::Theorem4Convex => Theorem::T4,
            StepsizeRule::Theorem5Cyclic => Theorem::T5,
            StepsizeRule::Theorem6CyclicConvex => Theorem::T6,
            StepsizeRule::Theorem7 => Theorem::T7,
            StepsizeRule::Theorem8 { .. } => Theorem::T8,
            StepsizeRule::ShuffledSvrgTheory => {
                if mu > 0.0 && n as f64 >= big_data_threshold(smoothness, mu) {
                    Theorem::T2
                } else {
                    Theorem::T1
                }
            }
            _ => return None,
        })
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            StepsizeRule::Theorem3 { delta } | StepsizeRule::Theorem8 { delta } => Some(*delta),
            _ => None,
        }
    }
}

/// Largest stepsize the rule admits for `(L, μ, n)`.
pub fn theoretical_stepsize(
    rule: &StepsizeRule,
    smoothness: f64,
    mu: f64,
    n: usize,
) -> Result<f64, StepsizeError> {
    let l = smoothness;
    if !(l > 0.0 && l.is_finite()) || n == 0 {
        return Err(StepsizeError::InvalidConstants(format!("need L > 0 and n >= 1, got L = {l}, n = {n}")));
    }
    let strongly_convex = || -> Result<(), StepsizeError> {
        if mu > 0.0 && mu <= l {
            Ok(())
        } else {
            Err(StepsizeError::InvalidConstants(format!("need 0 < mu <= L, got mu = {mu}, L = {l}")))
        }
    };
    let check_delta = |delta: f64, lo: f64, hi: f64| -> Result<(), StepsizeError> {
        if delta > lo && delta < hi {
            Ok(())
        } else {
            Err(StepsizeError::InvalidConstants(format!("need {lo} < delta < {hi}, got {delta}")))
        }
    };
    let large_n = |gamma: f64, delta: f64| -> Result<f64, StepsizeError> {
        let threshold = large_n_threshold(gamma, mu, delta);
        if (n as f64) > threshold {
            Ok(gamma)
        } else {
            Err(StepsizeError::Regime(format!(
                "n > log(1/(1-delta^2))/log(1/(1-gamma mu)) = {threshold:.4} fails for n = {n}"
            )))
        }
    };
    match rule {
        StepsizeRule::Theorem1 => {
            strongly_convex()?;
            Ok(stepsize_limits::t1(l, mu, n))
        }
        StepsizeRule::Theorem2BigData => {
            strongly_convex()?;
            let threshold = big_data_threshold(l, mu);
            if (n as f64) < threshold {
                return Err(StepsizeError::Regime(format!(
                    "big-data regime needs n >= (2L/mu)/(1 - mu/(sqrt2 L)) = {threshold:.4}, got n = {n}"
                )));
            }
            Ok(stepsize_limits::t2(l, n))
        }
        StepsizeRule::Theorem3 { delta } => {
            strongly_convex()?;
            check_delta(*delta, 0.0, 1.0)?;
            large_n(stepsize_limits::t3(l, mu, n, *delta), *delta)
        }
        StepsizeRule::Theorem4Convex => Ok(stepsize_limits::t2(l, n)),
        StepsizeRule::Theorem5Cyclic => {
            strongly_convex()?;
            Ok(stepsize_limits::t5(l, mu, n))
        }
        StepsizeRule::Theorem6CyclicConvex | StepsizeRule::Theorem7 => Ok(stepsize_limits::t7(l, n)),
        StepsizeRule::Theorem8 { delta } => {
            strongly_convex()?;
            check_delta(*delta, 0.5, std::f64::consts::FRAC_1_SQRT_2)?;
            large_n(stepsize_limits::t8(l, mu, n), *delta)
        }
        StepsizeRule::ShuffledSvrgTheory => {
            strongly_convex()?;
            if (n as f64) >= big_data_threshold(l, mu) {
                Ok(stepsize_limits::t2(l, n))
            } else {
                Ok(stepsize_limits::t1(l, mu, n))
            }
        }
        StepsizeRule::RrSagaTheory => {
            strongly_convex()?;
            Ok(mu / (11.0 * l * l * n as f64))
        }
        StepsizeRule::GridBest(_) => Err(StepsizeError::NeedsGridSearch),
        StepsizeRule::Manual(gamma) => {
            if *gamma > 0.0 && gamma.is_finite() {
                Ok(*gamma)
            } else {
                Err(StepsizeError::InvalidConstants(format!("manual stepsize must be positive, got {gamma}")))
            }
        }
    }
}
