//! Experiment manifests: a versioned JSON document, optionally overridden by
//! command-line flags, validated against the problem before anything runs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use shufflevr::metrics::Theorem;
use shufflevr::optim::{theoretical_stepsize, Algorithm, ControlUpdate, StepsizeRule};
use shufflevr::FiniteSumProblem;

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Ridge,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoTag {
    RrSvrg,
    SoSvrg,
    CyclicSvrg,
    RrVr,
    RrSgd,
    Svrg,
    LSvrg,
    Saga,
    RrSaga,
}

impl AlgoTag {
    pub fn label(self) -> &'static str {
        match self {
            AlgoTag::RrSvrg => "rr-svrg",
            AlgoTag::SoSvrg => "so-svrg",
            AlgoTag::CyclicSvrg => "cyclic-svrg",
            AlgoTag::RrVr => "rr-vr",
            AlgoTag::RrSgd => "rr-sgd",
            AlgoTag::Svrg => "svrg",
            AlgoTag::LSvrg => "l-svrg",
            AlgoTag::Saga => "saga",
            AlgoTag::RrSaga => "rr-saga",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRuleTag {
    /// `y ← x_t`
    #[default]
    Prev,
    /// `y ← x_{t+1}`
    Current,
}

/// `λ` as a number or as a multiple of `1/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Fixed(f64),
    OverN(f64),
}

impl LambdaSpec {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            LambdaSpec::Fixed(v) => v,
            LambdaSpec::OverN(c) => c / n as f64,
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("lambda must be a number, 1/n, 1/10n or 10/n, got {s:?}"));
        match s.trim() {
            "1/n" => Ok(LambdaSpec::OverN(1.0)),
            "1/10n" => Ok(LambdaSpec::OverN(0.1)),
            "10/n" => Ok(LambdaSpec::OverN(10.0)),
            other => {
                let v: f64 = other.parse().map_err(|_| bad())?;
                if v >= 0.0 && v.is_finite() {
                    Ok(LambdaSpec::Fixed(v))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LambdaSpec::Fixed(v) => write!(f, "{v}"),
            LambdaSpec::OverN(c) if c == 1.0 => f.write_str("1/n"),
            LambdaSpec::OverN(c) if c == 0.1 => f.write_str("1/10n"),
            LambdaSpec::OverN(c) if c == 10.0 => f.write_str("10/n"),
            LambdaSpec::OverN(c) => write!(f, "{c}/n"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LambdaRepr {
    Number(f64),
    Text(String),
}

impl Serialize for LambdaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LambdaSpec::Fixed(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match LambdaRepr::deserialize(d)? {
            LambdaRepr::Number(v) if v >= 0.0 && v.is_finite() => Ok(LambdaSpec::Fixed(v)),
            LambdaRepr::Number(v) => Err(serde::de::Error::custom(format!("lambda must be nonnegative, got {v}"))),
            LambdaRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Stepsize rule tag: `t1`..`t8`, `auto`, `rr-saga`, `grid` or `manual:<γ>`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaRule {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    /// `t2` in the big-data regime, `t1` otherwise.
    Auto,
    RrSaga,
    Grid,
    Manual(f64),
}

impl FromStr for GammaRule {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rule = match s.trim() {
            "t1" => GammaRule::T1,
            "t2" => GammaRule::T2,
            "t3" => GammaRule::T3,
            "t4" => GammaRule::T4,
            "t5" => GammaRule::T5,
            "t6" => GammaRule::T6,
            "t7" => GammaRule::T7,
            "t8" => GammaRule::T8,
            "auto" => GammaRule::Auto,
            "rr-saga" => GammaRule::RrSaga,
            "grid" => GammaRule::Grid,
            other => match other.strip_prefix("manual:").map(str::parse::<f64>) {
                Some(Ok(g)) if g > 0.0 && g.is_finite() => GammaRule::Manual(g),
                _ => {
                    return Err(HarnessError::Config(format!(
                        "unknown gamma rule {other:?}; expected t1..t8, auto, rr-saga, grid or manual:<gamma>"
                    )))
                }
            },
        };
        Ok(rule)
    }
}

impl fmt::Display for GammaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            GammaRule::T1 => "t1",
            GammaRule::T2 => "t2",
            GammaRule::T3 => "t3",
            GammaRule::T4 => "t4",
            GammaRule::T5 => "t5",
            GammaRule::T6 => "t6",
            GammaRule::T7 => "t7",
            GammaRule::T8 => "t8",
            GammaRule::Auto => "auto",
            GammaRule::RrSaga => "rr-saga",
            GammaRule::Grid => "grid",
            GammaRule::Manual(g) => return write!(f, "manual:{g}"),
        };
        f.write_str(tag)
    }
}

impl Serialize for GammaRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GammaRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub kappa: f64,
    pub seed: u64,
}

impl FromStr for SynthSpec {
    type Err = HarnessError;

    /// `n,d,kappa,seed`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::Config(format!("synth spec must be n,d,kappa,seed, got {s:?}"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        Ok(SynthSpec {
            n: parts[0].parse().map_err(|_| bad())?,
            d: parts[1].parse().map_err(|_| bad())?,
            kappa: parts[2].parse().map_err(|_| bad())?,
            seed: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// LIBSVM file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Synthetic ridge instance, used when no dataset is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    /// Defaults to `1/n` for datasets and to the calibrated value for synthetic
    /// instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPoint {
    #[default]
    Zeros,
}

impl FromStr for StartPoint {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zeros" => Ok(StartPoint::Zeros),
            other => Err(HarnessError::Config(format!("unsupported x0 {other:?}; only zeros"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub algorithm: AlgoTag,
    pub gamma_rule: GammaRule,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    /// RR-VR control refresh probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub update_rule: UpdateRuleTag,
    /// Inner loop length for `svrg`; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_loop: Option<usize>,
    /// Refresh probability for `l-svrg`; defaults to `1/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default)]
    pub x0: StartPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Concurrent seeds; defaults to the number of CPUs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, algorithm: AlgoTag, gamma_rule: GammaRule, epochs: usize, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem,
            algorithm,
            gamma_rule,
            epochs,
            seeds,
            p: None,
            delta: None,
            update_rule: UpdateRuleTag::Prev,
            inner_loop: None,
            q: None,
            x0: StartPoint::Zeros,
            out: None,
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Short stable identifier of the manifest.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        // Output location and pool size do not change results.
        let mut semantic = self.clone();
        semantic.out = None;
        semantic.workers = None;
        let canonical = serde_json::to_string(&semantic).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.algorithm.label(), self.gamma_rule)
    }

    /// Checks the configuration against the built problem and resolves the
    /// algorithm and stepsize rule. Regime preconditions of theorem rules are
    /// evaluated here, before any run.
    pub fn validate(&self, problem: &FiniteSumProblem) -> Result<Validated, HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        let n = problem.n();
        let algorithm = match self.algorithm {
            AlgoTag::RrSvrg => Algorithm::RrSvrg,
            AlgoTag::SoSvrg => Algorithm::SoSvrg,
            AlgoTag::CyclicSvrg => Algorithm::CyclicSvrg,
            AlgoTag::RrVr => {
                let p = self
                    .p
                    .ok_or_else(|| HarnessError::Config("rr-vr needs the refresh probability p".into()))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(HarnessError::Config(format!("p must lie in (0, 1], got {p}")));
                }
                let update_rule = match self.update_rule {
                    UpdateRuleTag::Prev => ControlUpdate::PaperPrev,
                    UpdateRuleTag::Current => ControlUpdate::PracticalCurrent,
                };
                Algorithm::RrVr { p, update_rule }
            }
            AlgoTag::RrSgd => Algorithm::RrSgd,
            AlgoTag::Svrg => {
                let inner_loop = self.inner_loop.unwrap_or(n);
                if inner_loop == 0 {
                    return Err(HarnessError::Config("inner_loop must be positive".into()));
                }
                Algorithm::Svrg { inner_loop }
            }
            AlgoTag::LSvrg => {
                let q = self.q.unwrap_or(1.0 / n as f64);
                if !(q > 0.0 && q <= 1.0) {
                    return Err(HarnessError::Config(format!("q must lie in (0, 1], got {q}")));
                }
                Algorithm::LSvrg { q }
            }
            AlgoTag::Saga => Algorithm::Saga,
            AlgoTag::RrSaga => Algorithm::RrSaga,
        };
        let need_delta = || {
            self.delta
                .ok_or_else(|| HarnessError::Config(format!("gamma rule {} needs delta", self.gamma_rule)))
        };
        let (rule, theorem) = match self.gamma_rule {
            GammaRule::T1 => (StepsizeRule::Theorem1, Some(Theorem::T1)),
            GammaRule::T2 => (StepsizeRule::Theorem2BigData, Some(Theorem::T2)),
            GammaRule::T3 => (StepsizeRule::Theorem3 { delta: need_delta()? }, Some(Theorem::T3)),
            GammaRule::T4 => (StepsizeRule::Theorem4Convex, Some(Theorem::T4)),
            GammaRule::T5 => (StepsizeRule::Theorem5Cyclic, Some(Theorem::T5)),
            GammaRule::T6 => (StepsizeRule::Theorem6CyclicConvex, Some(Theorem::T6)),
            GammaRule::T7 => (StepsizeRule::Theorem7, Some(Theorem::T7)),
            GammaRule::T8 => (StepsizeRule::Theorem8 { delta: need_delta()? }, Some(Theorem::T8)),
            GammaRule::Auto => (StepsizeRule::ShuffledSvrgTheory, None),
            GammaRule::RrSaga => (StepsizeRule::RrSagaTheory, None),
            GammaRule::Grid => (StepsizeRule::default_grid(), None),
            GammaRule::Manual(g) => (StepsizeRule::Manual(g), None),
        };
        if let Some(t) = theorem {
            if !algorithm.covered_by(t) {
                return Err(HarnessError::Config(format!(
                    "gamma rule {} is derived for a different method than {}",
                    self.gamma_rule,
                    self.algorithm.label()
                )));
            }
        }
        if matches!(self.gamma_rule, GammaRule::Auto) && !matches!(algorithm, Algorithm::RrSvrg | Algorithm::SoSvrg) {
            return Err(HarnessError::Config("gamma rule auto applies to rr-svrg and so-svrg".into()));
        }
        let gamma = match rule {
            StepsizeRule::GridBest(_) => None,
            ref r => Some(
                theoretical_stepsize(r, problem.smoothness(), problem.strong_convexity(), n)
                    .map_err(|e| HarnessError::Config(format!("gamma rule {}: {e}", self.gamma_rule)))?,
            ),
        };
        Ok(Validated {
            algorithm,
            rule,
            gamma,
        })
    }
}

/// A configuration resolved against its problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub algorithm: Algorithm,
    pub rule: StepsizeRule,
    /// `None` for grid rules.
    pub gamma: Option<f64>,
}
