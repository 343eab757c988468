//! Property suites behind `shufflevr verify`.
//!
//! Slack is measured so that a nonnegative value means the check holds; a
//! suite's `worst_slack` is the minimum over its cases.

use serde::Serialize;
use shufflevr::linalg::{dist_sq, norm_sq, DenseMatrix};
use shufflevr::metrics::{lemma1_check, perturbed_component_grad, perturbed_component_value, stepsize_limits};
use shufflevr::optim::{
    loop_svrg_step, rr_sgd_epoch, rr_vr_epoch, run, saga_family_epoch, svrg_epoch, Algorithm, ControlUpdate,
    LoopSvrgState, LoopVariant, RrVrState, RunConfig, SagaOrder, SagaState, SgdState, StepsizeRule, SvrgState,
};
use shufflevr::oracle::{exact_ridge_optimum, expectation_over_permutations, high_precision_optimum, min_norm_ridge_optimum};
use shufflevr::problem::synth_ridge;
use shufflevr::sampling::{fisher_yates, PermutationStrategy};
use shufflevr::{Dataset, FiniteSumProblem, Reference, RngState, ShuffleMode};

use crate::HarnessError;

pub const SUITES: [&str; 7] = ["lemma1", "theorem1", "theorem4", "theorem5", "fixedpoint", "gradcheck", "enumeration"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub passes: usize,
    pub worst_slack: f64,
    pub status: String,
    pub checks: Vec<Check>,
}

#[derive(Default)]
struct Tally {
    cases: usize,
    passes: usize,
    worst: f64,
    checks: Vec<Check>,
}

impl Tally {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            ..Self::default()
        }
    }

    fn case(&mut self, slack: f64) -> bool {
        self.cases += 1;
        let ok = slack >= 0.0;
        self.passes += ok as usize;
        self.worst = self.worst.min(slack);
        ok
    }

    fn check(&mut self, name: impl Into<String>, slack: f64, note: Option<String>) {
        let passed = self.case(slack);
        self.checks.push(Check {
            name: name.into(),
            passed,
            slack,
            note,
        });
    }

    fn report(self, suite: &str) -> SuiteReport {
        let status = if self.passes == self.cases { "pass" } else { "fail" };
        SuiteReport {
            suite: suite.to_string(),
            cases: self.cases,
            passes: self.passes,
            worst_slack: self.worst,
            status: status.into(),
            checks: self.checks,
        }
    }
}

pub fn run_suite(name: &str) -> Result<SuiteReport, HarnessError> {
    let report = match name {
        "lemma1" => lemma1(),
        "theorem1" => theorem1(),
        "theorem4" => theorem4(),
        "theorem5" => theorem5(),
        "fixedpoint" => fixedpoint(),
        "gradcheck" => gradcheck(),
        "enumeration" => enumeration(),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(report)
}

fn gaussian(rng: &mut RngState, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gaussian()).collect()
}

fn gaussian_problem(rng: &mut RngState, logistic: bool) -> FiniteSumProblem {
    let n = 2 + rng.below(30);
    let d = 1 + rng.below(6);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| gaussian(rng, d)).collect();
    let labels: Vec<f64> = if logistic { (0..n).map(|i| (i % 2) as f64).collect() } else { gaussian(rng, n) };
    let ds = Dataset::new(DenseMatrix::from_rows(&rows).expect("rectangular"), labels, "gauss").expect("finite data");
    let lambda = 10f64.powf(-2.0 + 2.0 * rng.uniform());
    if logistic {
        FiniteSumProblem::logistic(ds, lambda).expect("two labels")
    } else {
        FiniteSumProblem::ridge(ds, lambda).expect("valid ridge")
    }
}

fn optimum(p: &FiniteSumProblem) -> Vec<f64> {
    exact_ridge_optimum(p)
        .or_else(|_| high_precision_optimum(p))
        .expect("strongly convex instance")
        .x_star
}

fn lemma1() -> SuiteReport {
    let mut rng = RngState::new(1);
    let mut t = Tally::new();
    let mut worst_ratio = [0.0f64; 2];
    for k in 0..50 {
        let logistic = k % 5 == 4;
        let p = gaussian_problem(&mut rng, logistic);
        let x_star = optimum(&p);
        for _ in 0..20 {
            let scale = 10f64.powf(-3.0 + 4.0 * rng.uniform());
            let y: Vec<f64> = x_star.iter().map(|x| x + scale * rng.gaussian()).collect();
            let outcome = lemma1_check(&p, &x_star, &y);
            worst_ratio[logistic as usize] = worst_ratio[logistic as usize].max(outcome.ratio());
            // rounding noise at y ≈ x* is tolerated by `holds`
            let slack = 1.0 - outcome.ratio();
            t.case(if outcome.holds { slack.max(0.0) } else { slack });
        }
    }
    let mut report = t.report("lemma1");
    for (name, r) in [("ridge", worst_ratio[0]), ("logistic", worst_ratio[1])] {
        report.checks.push(Check {
            name: format!("{name} worst ratio"),
            passed: r <= 1.0,
            slack: 1.0 - r,
            note: Some(format!("{r:.4}")),
        });
    }
    report
}

fn theorem1() -> SuiteReport {
    let mut t = Tally::new();
    let p = synth_ridge(50, 10, 100.0, 1).expect("feasible target");
    let cert = exact_ridge_optimum(&p).expect("regular");
    let reference = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let (epochs, seeds) = (200, 100u64);
    let mut mean = vec![0.0; epochs + 1];
    let mut bounds = Vec::new();
    for seed in 0..seeds {
        let trace = run(&p, reference, &RunConfig::new(Algorithm::RrSvrg, StepsizeRule::Theorem1, epochs, seed))
            .expect("stable stepsize");
        for (m, r) in mean.iter_mut().zip(&trace.records) {
            *m += r.dist_sq / seeds as f64;
        }
        if bounds.is_empty() {
            bounds = trace.records.iter().map(|r| r.bound.expect("T1 bound attached")).collect();
        }
    }
    for (epoch, (m, b)) in mean.iter().zip(&bounds).enumerate() {
        let slack = (1.05 * b - m) / b;
        if slack < 0.0 {
            t.check(format!("epoch {epoch}"), slack, Some("mean exceeds 1.05 x bound".into()));
        } else {
            t.case(slack);
        }
    }
    t.report("theorem1")
}

fn rank_deficient_ridge() -> FiniteSumProblem {
    let mut rng = RngState::new(4);
    let (n, d, r) = (20, 8, 3);
    let u: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, r)).collect();
    let v: Vec<Vec<f64>> = (0..r).map(|_| gaussian(&mut rng, d)).collect();
    let rows: Vec<Vec<f64>> = u
        .iter()
        .map(|ui| (0..d).map(|j| (0..r).map(|k| ui[k] * v[k][j]).sum()).collect())
        .collect();
    let ds = Dataset::new(DenseMatrix::from_rows(&rows).expect("rectangular"), gaussian(&mut rng, n), "rank3")
        .expect("finite")
        .normalize_rows();
    FiniteSumProblem::ridge(ds, 0.0).expect("valid ridge")
}

fn theorem4() -> SuiteReport {
    let mut t = Tally::new();
    let p = rank_deficient_ridge();
    let cert = min_norm_ridge_optimum(&p).expect("ridge");
    let reference = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let d0 = norm_sq(&cert.x_star);
    for seed in 0..3 {
        let trace = run(&p, reference, &RunConfig::new(Algorithm::RrSvrg, StepsizeRule::Theorem4Convex, 500, seed))
            .expect("stable stepsize");
        let gn = trace.gamma * p.n() as f64;
        for r in &trace.records[1..] {
            let bound = 3.0 * d0 / (2.0 * gn * r.epoch as f64);
            let slack = (bound - r.ergodic_gap) / bound;
            if slack < 0.0 {
                t.check(format!("seed {seed} epoch {}", r.epoch), slack, None);
            } else {
                t.case(slack);
            }
        }
    }
    t.report("theorem4")
}

fn theorem5() -> SuiteReport {
    let mut t = Tally::new();
    let p = synth_ridge(50, 10, 100.0, 1).expect("feasible target");
    let x_star = exact_ridge_optimum(&p).expect("regular").x_star;
    let (l, mu, n) = (p.smoothness(), p.strong_convexity(), p.n());
    let gamma = stepsize_limits::t5(l, mu, n);
    let rate = 1.0 - gamma * n as f64 * mu / 2.0;
    let mut s = SvrgState::new(vec![0.0; p.d()], gamma);
    let d0 = dist_sq(&s.x, &x_star);
    let cyclic: Vec<usize> = (0..n).collect();
    for epoch in 1..=200 {
        svrg_epoch(&p, &cyclic, &mut s).expect("stable stepsize");
        let bound = rate.powi(epoch) * d0;
        let slack = (bound * (1.0 + 1e-12) - dist_sq(&s.x, &x_star)) / bound;
        if slack < 0.0 {
            t.check(format!("epoch {epoch}"), slack, None);
        } else {
            t.case(slack);
        }
    }
    t.report("theorem5")
}

fn fixedpoint() -> SuiteReport {
    let mut t = Tally::new();
    let p = synth_ridge(30, 5, 20.0, 2).expect("feasible target");
    let x_star = exact_ridge_optimum(&p).expect("regular").x_star;
    let tol = 1e-10 * (1.0 + norm_sq(&x_star).sqrt());
    let gamma = 0.5 / p.smoothness();
    let n = p.n();
    let mut rng = RngState::new(3);
    let mut drifts: Vec<(&str, f64)> = Vec::new();
    for (name, mode) in [
        ("rr-svrg", ShuffleMode::RandomReshuffle),
        ("so-svrg", ShuffleMode::ShuffleOnce),
        ("cyclic-svrg", ShuffleMode::Cyclic),
    ] {
        let mut strategy = PermutationStrategy::new(mode, n);
        let mut s = SvrgState::new(x_star.clone(), gamma);
        for epoch in 0..10 {
            let perm = strategy.next_epoch_permutation(epoch, &mut rng);
            svrg_epoch(&p, &perm, &mut s).expect("stable");
        }
        drifts.push((name, dist_sq(&s.x, &x_star).sqrt()));
    }
    let mut vr = RrVrState::new(x_star.clone(), gamma, 0.3, ControlUpdate::PaperPrev).expect("valid p");
    for _ in 0..10 {
        let perm = fisher_yates(n, &mut rng);
        rr_vr_epoch(&p, &perm, &mut vr, &mut rng).expect("stable");
    }
    drifts.push(("rr-vr", dist_sq(&vr.x, &x_star).sqrt()));
    let mut saga = SagaState::new(&p, x_star.clone(), gamma).expect("dimension");
    for _ in 0..10 {
        saga_family_epoch(&p, &mut saga, SagaOrder::Uniform(&mut rng)).expect("stable");
    }
    drifts.push(("saga", dist_sq(&saga.x, &x_star).sqrt()));
    let mut rr_saga = SagaState::new(&p, x_star.clone(), gamma).expect("dimension");
    for _ in 0..10 {
        let perm = fisher_yates(n, &mut rng);
        saga_family_epoch(&p, &mut rr_saga, SagaOrder::Permutation(&perm)).expect("stable");
    }
    drifts.push(("rr-saga", dist_sq(&rr_saga.x, &x_star).sqrt()));
    for (name, variant) in [
        ("svrg", LoopVariant::ClassicSvrg { inner_loop: n }),
        ("l-svrg", LoopVariant::LSvrg { q: 1.0 / n as f64 }),
    ] {
        let mut s = LoopSvrgState::new(&p, x_star.clone(), gamma).expect("dimension");
        for _ in 0..10 * n {
            loop_svrg_step(&p, &mut s, variant, &mut rng).expect("stable");
        }
        drifts.push((name, dist_sq(&s.x, &x_star).sqrt()));
    }
    for (name, drift) in drifts {
        t.check(name, (tol - drift) / tol, Some(format!("drift {drift:e}")));
    }
    // Plain reshuffling moves away from x* whenever σ*² > 0.
    let mut sgd = SgdState {
        x: x_star.clone(),
        gamma,
        epoch: 0,
    };
    let perm = fisher_yates(n, &mut rng);
    rr_sgd_epoch(&p, &perm, &mut sgd).expect("stable");
    let drift = dist_sq(&sgd.x, &x_star).sqrt();
    t.check("rr-sgd", (drift - tol) / tol, Some(format!("not a fixed point (drift {drift:e})")));
    t.report("fixedpoint")
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

fn relative_error(fd: &[f64], exact: &[f64]) -> f64 {
    dist_sq(fd, exact).sqrt() / norm_sq(exact).sqrt().max(1e-8)
}

fn gradcheck() -> SuiteReport {
    let mut t = Tally::new();
    let mut rng = RngState::new(11);
    let mut worst = [0.0f64; 3];
    for _ in 0..50 {
        for (k, logistic) in [(0, false), (1, true)] {
            let p = gaussian_problem(&mut rng, logistic);
            let x = gaussian(&mut rng, p.d());
            let i = rng.below(p.n());
            let fd = central_difference(|z| p.component_value(i, z).expect("in range"), &x);
            let err = relative_error(&fd, &p.component_grad(i, &x).expect("in range"));
            worst[k] = worst[k].max(err);
            t.case(1e-6 - err);
        }
        let p = gaussian_problem(&mut rng, false);
        let x = gaussian(&mut rng, p.d());
        let a = gaussian(&mut rng, p.d());
        let i = rng.below(p.n());
        let fd = central_difference(|z| perturbed_component_value(&p, i, &a, z), &x);
        let err = relative_error(&fd, &perturbed_component_grad(&p, i, &a, &x));
        worst[2] = worst[2].max(err);
        t.case(1e-6 - err);
    }
    for (name, w) in ["ridge", "logistic", "perturbed"].iter().zip(worst) {
        t.checks.push(Check {
            name: name.to_string(),
            passed: w <= 1e-6,
            slack: 1e-6 - w,
            note: Some(format!("worst relative error {w:e}")),
        });
    }
    t.report("gradcheck")
}

fn enumeration() -> SuiteReport {
    let mut t = Tally::new();
    let mut rng = RngState::new(6);
    let mut seed = 0;
    let mut done = 0;
    while done < 20 {
        seed += 1;
        let n = 3 + done % 3;
        let kappa = 2.0 + 8.0 * rng.uniform();
        let Ok(p) = synth_ridge(n, 2, kappa, seed) else { continue };
        let (l, mu) = (p.smoothness(), p.strong_convexity());
        let gamma = stepsize_limits::t1(l, mu, n);
        let x_star = exact_ridge_optimum(&p).expect("regular").x_star;
        let x0 = gaussian(&mut rng, 2);
        let exact = expectation_over_permutations(&p, &SvrgState::new(x0.clone(), gamma), &x_star).expect("small n");
        let bound = (1.0 - gamma * n as f64 * mu / 2.0) * dist_sq(&x0, &x_star);
        let slack = (bound - exact) / bound;
        if slack < 0.0 {
            t.check(format!("n = {n}, seed {seed}"), slack, None);
        } else {
            t.case(slack);
        }
        done += 1;
    }
    t.report("enumeration")
}
