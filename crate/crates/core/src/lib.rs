//! Variance-reduced random reshuffling for finite-sum problems.
//!
//! RR-SVRG, SO-SVRG, Cyclic-SVRG and RR-VR, baselines (RR-SGD, SVRG, L-SVRG,
//! SAGA, RR-SAGA), and evaluators for their convergence guarantees.
//!
//! ```
//! use shufflevr::optim::{run, Algorithm, RunConfig, StepsizeRule};
//! use shufflevr::{oracle, problem, Reference};
//!
//! let p = problem::synth_ridge(40, 5, 20.0, 7).unwrap();
//! let opt = oracle::exact_ridge_optimum(&p).unwrap();
//! let reference = Reference { x_star: &opt.x_star, f_star: opt.f_star };
//! let config = RunConfig::new(Algorithm::RrSvrg, StepsizeRule::Theorem1, 20, 1);
//! let trace = run(&p, reference, &config).unwrap();
//! assert!(trace.records.last().unwrap().dist_sq < trace.records[0].dist_sq);
//! ```

pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod problem;
pub mod sampling;

pub use metrics::{Reference, Theorem, TraceRecord};
pub use problem::{Dataset, FiniteSumProblem, LossKind};
pub use sampling::{RngState, ShuffleMode};
