use super::*;
use crate::linalg::{dist_sq, DenseMatrix};
use crate::metrics::Reference;
use crate::oracle::exact_ridge_optimum;
use crate::problem::{synth_ridge, Dataset};
use crate::sampling::{PermutationStrategy, ShuffleMode};

fn ridge(rows: &[Vec<f64>], labels: &[f64], lambda: f64) -> FiniteSumProblem {
    let ds = Dataset::new(DenseMatrix::from_rows(rows).unwrap(), labels.to_vec(), "t").unwrap();
    FiniteSumProblem::ridge(ds, lambda).unwrap()
}

/// `f₁ = ½(x − 1)²`, `f₂ = 2x²`
fn mixed_curvature() -> FiniteSumProblem {
    ridge(&[vec![1.0], vec![2.0]], &[1.0, 0.0], 0.0)
}

#[test]
fn single_component_epoch_is_gradient_step() {
    let p = ridge(&[vec![0.5, -1.0, 2.0]], &[1.5], 0.1);
    let x0 = vec![0.3, -0.7, 1.1];
    let mut s = SvrgState::new(x0.clone(), 0.05);
    svrg_epoch(&p, &[0], &mut s).unwrap();
    let mut gd = x0;
    gradient_descent_step(&p, &mut gd, 0.05);
    assert_eq!(s.x, gd);
    assert_eq!(s.y, gd);
}

#[test]
fn hand_simulated_epochs() {
    let p = mixed_curvature();
    let mut s = SvrgState::new(vec![1.0], 0.1);
    svrg_epoch(&p, &[0, 1], &mut s).unwrap();
    assert!((s.x[0] - 0.68).abs() < 1e-15, "{}", s.x[0]);
    let mut s = SvrgState::new(vec![1.0], 0.1);
    svrg_epoch(&p, &[1, 0], &mut s).unwrap();
    assert!((s.x[0] - 0.62).abs() < 1e-15, "{}", s.x[0]);
    assert_eq!(s.epoch, 1);
}

#[test]
fn optimum_is_a_fixed_point() {
    let p = synth_ridge(20, 4, 10.0, 5).unwrap();
    let x_star = exact_ridge_optimum(&p).unwrap().x_star;
    let mut s = SvrgState::new(x_star.clone(), 0.3 / p.smoothness());
    let perm: Vec<usize> = (0..20).rev().collect();
    svrg_epoch(&p, &perm, &mut s).unwrap();
    assert!(dist_sq(&s.x, &x_star) < 1e-24);
}

#[test]
fn epoch_rejects_bad_orderings() {
    let p = mixed_curvature();
    let mut s = SvrgState::new(vec![1.0], 0.1);
    assert!(matches!(svrg_epoch(&p, &[0, 0], &mut s), Err(OptimError::InvalidPermutation { .. })));
    assert!(matches!(svrg_epoch(&p, &[0], &mut s), Err(OptimError::InvalidPermutation { .. })));
    assert!(matches!(svrg_epoch(&p, &[0, 2], &mut s), Err(OptimError::InvalidPermutation { .. })));
    assert_eq!(s.x, vec![1.0]);
}

#[test]
fn huge_stepsize_diverges() {
    let p = mixed_curvature();
    let mut s = SvrgState::new(vec![1.0], 50.0);
    let mut outcome = Ok(0);
    for _ in 0..20 {
        outcome = svrg_epoch(&p, &[0, 1], &mut s);
        if outcome.is_err() {
            break;
        }
    }
    assert!(matches!(outcome, Err(OptimError::Diverged { .. })));
}

#[test]
fn control_variate_is_exact_at_control_point() {
    let p = synth_ridge(10, 3, 5.0, 2).unwrap();
    let x = vec![0.2, -0.4, 0.9];
    let full = p.full_grad(&x);
    let mut out = vec![0.0; 3];
    for j in 0..10 {
        control_variate_estimate(&p, j, &x, &x, &full, &mut out);
        assert_eq!(out, full);
    }
}

#[test]
fn control_variate_is_unbiased() {
    let p = synth_ridge(10, 3, 5.0, 2).unwrap();
    let x = vec![0.2, -0.4, 0.9];
    let y = vec![-1.0, 0.5, 0.0];
    let gy = p.full_grad(&y);
    let mut mean = vec![0.0; 3];
    let mut out = vec![0.0; 3];
    for j in 0..10 {
        control_variate_estimate(&p, j, &x, &y, &gy, &mut out);
        axpy(0.1, &out, &mut mean);
    }
    assert!(dist_sq(&mean, &p.full_grad(&x)) < 1e-26);
}

#[test]
fn rr_vr_with_certain_refresh_matches_rr_svrg() {
    let p = synth_ridge(12, 3, 8.0, 11).unwrap();
    let gamma = 0.2 / p.smoothness();
    let mut perms = PermutationStrategy::new(ShuffleMode::RandomReshuffle, 12);
    let mut perm_rng = RngState::new(3);
    let mut coin = RngState::new(4);
    let mut svrg = SvrgState::new(vec![1.0; 3], gamma);
    let mut vr = RrVrState::new(vec![1.0; 3], gamma, 1.0, ControlUpdate::PracticalCurrent).unwrap();
    for t in 0..10 {
        let perm = perms.next_epoch_permutation(t, &mut perm_rng);
        let cost = svrg_epoch(&p, &perm, &mut svrg).unwrap();
        let e = rr_vr_epoch(&p, &perm, &mut vr, &mut coin).unwrap();
        assert!(e.control_updated);
        assert_eq!(e.grad_evals, cost);
        assert_eq!(vr.x, svrg.x);
        assert_eq!(vr.y, svrg.y);
    }
}

#[test]
fn rr_vr_paper_rule_lags_one_epoch() {
    let p = synth_ridge(8, 2, 4.0, 1).unwrap();
    let mut vr = RrVrState::new(vec![1.0, -1.0], 0.05, 1.0, ControlUpdate::PaperPrev).unwrap();
    let mut rng = RngState::new(0);
    let perm: Vec<usize> = (0..8).collect();
    let x0 = vr.x.clone();
    rr_vr_epoch(&p, &perm, &mut vr, &mut rng).unwrap();
    assert_eq!(vr.y, x0);
    let x1 = vr.x.clone();
    rr_vr_epoch(&p, &perm, &mut vr, &mut rng).unwrap();
    assert_eq!(vr.y, x1);
}

#[test]
fn rr_vr_refresh_frequency_and_cost() {
    let p = ridge(&[vec![1.0], vec![1.0]], &[1.0, -1.0], 0.0);
    let mut vr = RrVrState::new(vec![0.5], 0.1, 0.5, ControlUpdate::PaperPrev).unwrap();
    let mut rng = RngState::new(99);
    let mut updates = 0;
    let mut pending_refresh = true;
    for _ in 0..10_000 {
        let e = rr_vr_epoch(&p, &[0, 1], &mut vr, &mut rng).unwrap();
        assert_eq!(e.grad_evals, if pending_refresh { 6 } else { 4 });
        pending_refresh = e.control_updated;
        updates += e.control_updated as usize;
    }
    let freq = updates as f64 / 10_000.0;
    assert!((freq - 0.5).abs() <= 0.02, "{freq}");
}

#[test]
fn rr_vr_rejects_bad_probability() {
    assert!(RrVrState::new(vec![0.0], 0.1, 0.0, ControlUpdate::PaperPrev).is_err());
    assert!(RrVrState::new(vec![0.0], 0.1, 1.5, ControlUpdate::PaperPrev).is_err());
}

#[test]
fn rr_sgd_drifts_away_from_optimum() {
    // x* = 0 but the components disagree there
    let p = ridge(&[vec![1.0], vec![1.0]], &[1.0, -1.0], 0.0);
    let mut s = SgdState {
        x: vec![0.0],
        gamma: 0.5,
        epoch: 0,
    };
    assert_eq!(rr_sgd_epoch(&p, &[0, 1], &mut s).unwrap(), 2);
    assert_eq!(s.x, vec![-0.25]);
    let mut frozen = SgdState {
        x: vec![0.7],
        gamma: 0.0,
        epoch: 0,
    };
    rr_sgd_epoch(&p, &[1, 0], &mut frozen).unwrap();
    assert_eq!(frozen.x, vec![0.7]);
}

#[test]
fn saga_table_mean_stays_consistent() {
    let p = synth_ridge(15, 4, 6.0, 8).unwrap();
    let mut s = SagaState::new(&p, vec![0.5; 4], 0.1 / p.smoothness()).unwrap();
    let mut rng = RngState::new(1);
    for _ in 0..30 {
        saga_family_epoch(&p, &mut s, SagaOrder::Uniform(&mut rng)).unwrap();
    }
    let perm: Vec<usize> = (0..15).collect();
    for _ in 0..30 {
        saga_family_epoch(&p, &mut s, SagaOrder::Permutation(&perm)).unwrap();
    }
    assert!(dist_sq(s.table_mean(), &s.recomputed_mean()) < 1e-24);
    assert_eq!(s.epoch, 60);
}

#[test]
fn saga_first_step_cancels() {
    // with the table filled at x, the first estimate is exactly ∇f(x)
    let p = mixed_curvature();
    let mut s = SagaState::new(&p, vec![1.0], 0.1).unwrap();
    let full = p.full_grad(&[1.0]);
    assert_eq!(s.table_entry(1), &[4.0]);
    let mut g = vec![0.0];
    s.step(&p, 1, 0, &mut g).unwrap();
    assert_eq!(s.x, vec![1.0 - 0.1 * full[0]]);
}

#[test]
fn saga_optimum_is_fixed_point() {
    let p = synth_ridge(10, 3, 5.0, 6).unwrap();
    let x_star = exact_ridge_optimum(&p).unwrap().x_star;
    let mut s = SagaState::new(&p, x_star.clone(), 0.5 / p.smoothness()).unwrap();
    let mut rng = RngState::new(5);
    saga_family_epoch(&p, &mut s, SagaOrder::Uniform(&mut rng)).unwrap();
    assert!(dist_sq(&s.x, &x_star) < 1e-24);
}

#[test]
fn loop_svrg_refresh_costs() {
    let p = synth_ridge(6, 2, 3.0, 2).unwrap();
    let mut rng = RngState::new(7);
    let mut s = LoopSvrgState::new(&p, vec![0.0; 2], 0.1).unwrap();
    for _ in 0..5 {
        let c = loop_svrg_step(&p, &mut s, LoopVariant::ClassicSvrg { inner_loop: 1 }, &mut rng).unwrap();
        assert_eq!(c, 8);
        assert_eq!(s.x, s.y);
    }
    let mut s = LoopSvrgState::new(&p, vec![0.0; 2], 0.1).unwrap();
    let costs: Vec<u64> = (0..6)
        .map(|_| loop_svrg_step(&p, &mut s, LoopVariant::ClassicSvrg { inner_loop: 3 }, &mut rng).unwrap())
        .collect();
    assert_eq!(costs, vec![2, 2, 8, 2, 2, 8]);
    let mut s = LoopSvrgState::new(&p, vec![0.0; 2], 0.1).unwrap();
    for _ in 0..5 {
        assert_eq!(loop_svrg_step(&p, &mut s, LoopVariant::LSvrg { q: 1.0 }, &mut rng).unwrap(), 8);
    }
    assert!(loop_svrg_step(&p, &mut s, LoopVariant::LSvrg { q: 0.0 }, &mut rng).is_err());
}

fn reference_for(p: &FiniteSumProblem) -> crate::oracle::OptimumCertificate {
    exact_ridge_optimum(p).unwrap()
}

#[test]
fn run_counts_gradients() {
    let p = synth_ridge(10, 3, 5.0, 1).unwrap();
    let cert = reference_for(&p);
    let r = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let manual = StepsizeRule::Manual(0.1 / p.smoothness());
    let cases = [
        (Algorithm::RrSvrg, 0, 30),
        (Algorithm::CyclicSvrg, 0, 30),
        (Algorithm::RrSgd, 0, 10),
        (Algorithm::Saga, 10, 10),
        (Algorithm::RrSaga, 10, 10),
    ];
    for (algo, init, per_epoch) in cases {
        let trace = run(&p, r, &RunConfig::new(algo, manual.clone(), 4, 3)).unwrap();
        let evals: Vec<u64> = trace.records.iter().map(|rec| rec.grad_evals).collect();
        let expected: Vec<u64> = (0..5).map(|t| init + per_epoch * t).collect();
        assert_eq!(evals, expected, "{}", algo.label());
    }
}

#[test]
fn run_is_deterministic_and_shuffle_once_repeats() {
    let p = synth_ridge(10, 3, 5.0, 1).unwrap();
    let cert = reference_for(&p);
    let r = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let config = RunConfig::new(Algorithm::SoSvrg, StepsizeRule::Theorem1, 5, 42);
    let a = run(&p, r, &config).unwrap();
    let b = run(&p, r, &config).unwrap();
    assert_eq!(a, b);

    let mut rng = RngState::new(42);
    let perm = crate::sampling::fisher_yates(10, &mut rng);
    let mut s = SvrgState::new(vec![0.0; 3], a.gamma);
    for _ in 0..5 {
        svrg_epoch(&p, &perm, &mut s).unwrap();
    }
    assert_eq!(s.x, a.x);
}

#[test]
fn run_attaches_bounds() {
    let p = synth_ridge(10, 3, 5.0, 1).unwrap();
    let cert = reference_for(&p);
    let r = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let trace = run(&p, r, &RunConfig::new(Algorithm::RrSvrg, StepsizeRule::Theorem1, 3, 0)).unwrap();
    assert_eq!(trace.theorem, Some(crate::metrics::Theorem::T1));
    assert!(trace.records.iter().all(|rec| rec.bound.is_some()));
    assert_eq!(trace.records[0].bound, Some(trace.records[0].dist_sq));

    let saga = run(&p, r, &RunConfig::new(Algorithm::Saga, StepsizeRule::Theorem1, 3, 0)).unwrap();
    assert!(saga.theorem.is_none() && saga.records.iter().all(|rec| rec.bound.is_none()));

    let mut forced = RunConfig::new(Algorithm::Saga, StepsizeRule::Theorem1, 1, 0);
    forced.bound = BoundSelection::Theorem(crate::metrics::Theorem::T1);
    let t = run(&p, r, &forced).unwrap();
    assert!(t.bound_note.is_some());
}

#[test]
fn run_reports_divergence_with_partial_trace() {
    let p = synth_ridge(10, 3, 5.0, 1).unwrap();
    let cert = reference_for(&p);
    let r = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let config = RunConfig::new(Algorithm::RrSvrg, StepsizeRule::Manual(100.0), 50, 0);
    match run(&p, r, &config) {
        Err(RunError::Diverged { partial, .. }) => assert!(!partial.records.is_empty()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn grid_rule_needs_resolution() {
    let p = synth_ridge(10, 3, 5.0, 1).unwrap();
    let cert = reference_for(&p);
    let r = Reference {
        x_star: &cert.x_star,
        f_star: cert.f_star,
    };
    let config = RunConfig::new(Algorithm::RrSvrg, StepsizeRule::default_grid(), 5, 0);
    assert!(matches!(
        run(&p, r, &config),
        Err(RunError::Stepsize(StepsizeError::NeedsGridSearch))
    ));
}
