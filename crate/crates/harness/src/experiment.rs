use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use shufflevr::optim::{run, RunConfig, RunError, StepsizeRule, Trace};
use shufflevr::oracle::{self, OptimumCertificate, OracleError};
use shufflevr::problem::{load_libsvm, synth_ridge};
use shufflevr::{FiniteSumProblem, Reference};

use crate::config::{ExperimentConfig, ProblemKind, ProblemSpec, Validated};
use crate::HarnessError;

/// Normalized error at or below which a run counts as converged.
pub const THRESHOLD: f64 = 1e-6;

pub fn build_problem(spec: &ProblemSpec) -> Result<FiniteSumProblem, HarnessError> {
    let problem = match (&spec.dataset, &spec.synth) {
        (Some(path), _) => {
            let file = File::open(path).map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
            let name = path.file_name().map_or_else(|| "dataset".into(), |f| f.to_string_lossy().into_owned());
            let mut data = load_libsvm(BufReader::new(file), &name)?;
            if spec.normalize {
                data = data.normalize_rows();
            }
            let lambda = spec.lambda.map_or(1.0 / data.n() as f64, |l| l.resolve(data.n()));
            match spec.kind {
                ProblemKind::Ridge => FiniteSumProblem::ridge(data, lambda)?,
                ProblemKind::Logistic => FiniteSumProblem::logistic(data, lambda)?,
            }
        }
        (None, Some(s)) => {
            if spec.kind != ProblemKind::Ridge {
                return Err(HarnessError::Config("synthetic instances are ridge problems".into()));
            }
            let p = synth_ridge(s.n, s.d, s.kappa, s.seed)?;
            match spec.lambda {
                Some(l) => p.with_lambda(l.resolve(p.n()))?,
                None => p,
            }
        }
        (None, None) => return Err(HarnessError::Config("problem needs a dataset path or a synth spec".into())),
    };
    Ok(problem)
}

/// Ridge: closed form, or the minimum-norm solution when the system is
/// singular. Logistic: high-precision gradient descent.
pub fn solve_reference(p: &FiniteSumProblem) -> Result<OptimumCertificate, HarnessError> {
    let cert = match oracle::exact_ridge_optimum(p) {
        Ok(c) => c,
        Err(OracleError::NotRidge) => oracle::high_precision_optimum(p)?,
        Err(OracleError::Singular(_)) => oracle::min_norm_ridge_optimum(p)?,
        Err(e) => return Err(e.into()),
    };
    Ok(cert)
}

/// One seed's outcome. A diverged run keeps its partial trace.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: Trace,
    pub diverged: Option<String>,
}

fn run_one(
    p: &FiniteSumProblem,
    cert: &OptimumCertificate,
    validated: &Validated,
    rule: StepsizeRule,
    epochs: usize,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    let reference = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let config = RunConfig::new(validated.algorithm, rule, epochs, seed);
    match run(p, reference, &config) {
        Ok(trace) => Ok(SeedRun {
            seed,
            trace,
            diverged: None,
        }),
        Err(RunError::Diverged { partial, source }) => Ok(SeedRun {
            seed,
            trace: *partial,
            diverged: Some(source.to_string()),
        }),
        Err(e) => Err(HarnessError::Run(e.to_string())),
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    builder.build().map_err(|e| HarnessError::Run(e.to_string()))
}

/// Runs every seed concurrently; results come back in seed-list order.
pub fn run_seeds(
    p: &FiniteSumProblem,
    cert: &OptimumCertificate,
    config: &ExperimentConfig,
    validated: &Validated,
    rule: &StepsizeRule,
) -> Result<Vec<SeedRun>, HarnessError> {
    pool(config.workers)?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_one(p, cert, validated, rule.clone(), config.epochs, seed))
            .collect()
    })
}

pub fn trace_file_name(config: &ExperimentConfig, tag: &str, seed: u64) -> String {
    format!("{}-{}-seed{seed}.csv", config.algorithm.label(), tag.replace([':', '/'], "_"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub digest: String,
    pub label: String,
    pub seed: u64,
    pub epochs_to_threshold: Option<usize>,
    /// In units of `n` gradient evaluations.
    pub grad_evals_to_threshold: Option<f64>,
    pub final_error: f64,
    /// `None` when the trace carries no bound.
    pub bound_satisfied: Option<bool>,
    pub diverged: bool,
}

impl SummaryRow {
    pub fn from_trace(digest: &str, label: &str, run: &SeedRun, n: usize) -> Self {
        let trace = &run.trace;
        let d0 = trace.initial_dist_sq();
        let normalized = |d: f64| if d0 > 0.0 { d / d0 } else { d };
        let hit = trace.records.iter().find(|r| normalized(r.dist_sq) <= THRESHOLD);
        let ergodic = trace.theorem.is_some_and(|t| t.is_ergodic());
        let mut with_bound = trace.records.iter().filter_map(|r| r.bound.map(|b| (r, b))).peekable();
        let bound_satisfied = with_bound.peek().is_some().then(|| {
            with_bound.all(|(r, b)| {
                let measured = if ergodic { r.ergodic_gap } else { r.dist_sq };
                measured <= b * (1.0 + 1e-12)
            })
        });
        SummaryRow {
            digest: digest.to_string(),
            label: label.to_string(),
            seed: run.seed,
            epochs_to_threshold: hit.map(|r| r.epoch),
            grad_evals_to_threshold: hit.map(|r| r.grad_evals as f64 / n as f64),
            final_error: trace.records.last().map_or(f64::NAN, |r| normalized(r.dist_sq)),
            bound_satisfied,
            diverged: run.diverged.is_some(),
        }
    }
}

pub const SUMMARY_HEADER: &str =
    "digest,label,seed,epochs_to_threshold,grad_evals_over_n_to_threshold,final_error,bound_satisfied,diverged";

pub fn summary_csv_line(row: &SummaryRow) -> String {
    let opt = |v: Option<String>| v.unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{}",
        row.digest,
        row.label,
        row.seed,
        opt(row.epochs_to_threshold.map(|e| e.to_string())),
        opt(row.grad_evals_to_threshold.map(|e| e.to_string())),
        row.final_error,
        opt(row.bound_satisfied.map(|b| b.to_string())),
        row.diverged
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCandidate {
    pub multiplier: f64,
    pub gamma: f64,
    /// Mean over seeds of the final normalized error; `None` if any seed diverged.
    pub mean_final_error: Option<f64>,
    pub diverged_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub smoothness: f64,
    pub candidates: Vec<GridCandidate>,
    pub selected_gamma: Option<f64>,
    pub status: String,
}

/// Runs every grid candidate on every seed and selects the stepsize with the
/// smallest mean final error. Candidates with a diverged seed are excluded.
pub fn grid_search(
    p: &FiniteSumProblem,
    cert: &OptimumCertificate,
    config: &ExperimentConfig,
    validated: &Validated,
) -> Result<(GridReport, Vec<(GridCandidate, Vec<SeedRun>)>), HarnessError> {
    let multipliers = match &validated.rule {
        StepsizeRule::GridBest(m) => m.clone(),
        _ => return Err(HarnessError::Config("grid needs gamma rule grid".into())),
    };
    let l = p.smoothness();
    let mut runs = Vec::with_capacity(multipliers.len());
    for m in multipliers {
        let gamma = m / l;
        let seeds = run_seeds(p, cert, config, validated, &StepsizeRule::Manual(gamma))?;
        let diverged_seeds: Vec<u64> = seeds.iter().filter(|r| r.diverged.is_some()).map(|r| r.seed).collect();
        let finals: Vec<f64> = seeds
            .iter()
            .map(|r| {
                let d0 = r.trace.initial_dist_sq();
                let last = r.trace.records.last().map_or(f64::NAN, |rec| rec.dist_sq);
                if d0 > 0.0 {
                    last / d0
                } else {
                    last
                }
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let mean_final_error = (diverged_seeds.is_empty() && mean.is_finite()).then_some(mean);
        runs.push((
            GridCandidate {
                multiplier: m,
                gamma,
                mean_final_error,
                diverged_seeds,
            },
            seeds,
        ));
    }
    let selected = runs
        .iter()
        .filter_map(|(c, _)| c.mean_final_error.map(|e| (c.gamma, e)))
        .fold(None, |best: Option<(f64, f64)>, (g, e)| match best {
            Some((_, be)) if be <= e => best,
            _ => Some((g, e)),
        });
    let report = GridReport {
        smoothness: l,
        candidates: runs.iter().map(|(c, _)| c.clone()).collect(),
        selected_gamma: selected.map(|(g, _)| g),
        status: if selected.is_some() { "ok".into() } else { "no stable stepsize".into() },
    };
    Ok((report, runs))
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Output(format!("{}: {e}", dir.display())))
}
