//! Ground truth for the optimizers: optima computed without any stochastic
//! method, and exact one-epoch expectations by enumerating permutations.

use thiserror::Error;

use crate::linalg::{dist_sq, jacobi_eigen, norm_sq, Cholesky, DenseMatrix, LinalgError};
use crate::optim::{svrg_epoch, OptimError, SvrgState};
use crate::problem::{FiniteSumProblem, LossKind};

/// Largest `n` for which all `n!` permutations are enumerated.
pub const MAX_ENUMERATION_N: usize = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("closed form needs a ridge problem")]
    NotRidge,
    #[error("singular system (AᵀA/n + λI is not positive definite); use high_precision_optimum or min_norm_ridge_optimum")]
    Singular(#[source] LinalgError),
    #[error("gradient descent stopped after {iterations} iterations with |grad f| = {residual:e}")]
    IterationCap { iterations: u64, residual: f64 },
    #[error("non-finite iterate after {iterations} iterations")]
    NonFinite { iterations: u64 },
    #[error("enumeration needs n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateMethod {
    ClosedForm,
    HighPrecisionGD,
    /// Minimum-norm solution of a singular ridge system.
    MinNormPseudoInverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimumCertificate {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// `‖∇f(x*)‖` at the returned point.
    pub grad_norm: f64,
    pub method: CertificateMethod,
}

impl OptimumCertificate {
    fn at(p: &FiniteSumProblem, x_star: Vec<f64>, method: CertificateMethod) -> Self {
        Self {
            f_star: p.full_value(&x_star),
            grad_norm: norm_sq(&p.full_grad(&x_star)).sqrt(),
            x_star,
            method,
        }
    }

    /// `grad_norm ≤ 1e−10·(1 + ‖x*‖)`
    pub fn is_certified(&self) -> bool {
        self.grad_norm <= 1e-10 * (1.0 + norm_sq(&self.x_star).sqrt())
    }
}

fn ridge_system(p: &FiniteSumProblem) -> Result<(DenseMatrix, Vec<f64>), OracleError> {
    if p.kind() != LossKind::Ridge {
        return Err(OracleError::NotRidge);
    }
    let data = p.dataset();
    let n = p.n() as f64;
    let mut h = data.features.gram();
    h.scale(1.0 / n);
    for k in 0..p.d() {
        h[(k, k)] += p.lambda();
    }
    let mut b = data.features.tr_mul_vec(&data.labels);
    b.iter_mut().for_each(|v| *v /= n);
    Ok((h, b))
}

/// Solves `(AᵀA/n + λI)x = Aᵀy/n` by Cholesky.
pub fn exact_ridge_optimum(p: &FiniteSumProblem) -> Result<OptimumCertificate, OracleError> {
    let (h, b) = ridge_system(p)?;
    let chol = Cholesky::factor(&h).map_err(OracleError::Singular)?;
    Ok(OptimumCertificate::at(p, chol.solve(&b), CertificateMethod::ClosedForm))
}

/// Minimum-norm minimizer of a ridge problem, also when `AᵀA/n + λI` is
/// singular. Eigenvalues below `1e−12·λ_max·d` are treated as zero.
pub fn min_norm_ridge_optimum(p: &FiniteSumProblem) -> Result<OptimumCertificate, OracleError> {
    let (h, b) = ridge_system(p)?;
    let d = p.d();
    let (values, vectors) = jacobi_eigen(&h);
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = 1e-12 * top * d as f64;
    let mut x = vec![0.0; d];
    for (k, &lam) in values.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let coef = (0..d).map(|i| vectors[(i, k)] * b[i]).sum::<f64>() / lam;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += coef * vectors[(i, k)];
        }
    }
    Ok(OptimumCertificate::at(p, x, CertificateMethod::MinNormPseudoInverse))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    /// Stop once `‖∇f‖ ≤ tolerance·(1 + ‖x‖)`.
    pub tolerance: f64,
    pub max_iterations: u64,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 10_000_000,
        }
    }
}

/// Full gradient descent with stepsize `1/L` from zero.
pub fn high_precision_optimum(p: &FiniteSumProblem) -> Result<OptimumCertificate, OracleError> {
    high_precision_optimum_with(p, GdOptions::default())
}

pub fn high_precision_optimum_with(p: &FiniteSumProblem, opts: GdOptions) -> Result<OptimumCertificate, OracleError> {
    let step = 1.0 / p.smoothness();
    let mut x = vec![0.0; p.d()];
    let mut g = p.full_grad(&x);
    for it in 0..opts.max_iterations {
        let gn = norm_sq(&g).sqrt();
        if !gn.is_finite() {
            return Err(OracleError::NonFinite { iterations: it });
        }
        if gn <= opts.tolerance * (1.0 + norm_sq(&x).sqrt()) {
            return Ok(OptimumCertificate::at(p, x, CertificateMethod::HighPrecisionGD));
        }
        for (xk, gk) in x.iter_mut().zip(&g) {
            *xk -= step * gk;
        }
        g = p.full_grad(&x);
    }
    let residual = norm_sq(&g).sqrt();
    if residual <= opts.tolerance * (1.0 + norm_sq(&x).sqrt()) {
        return Ok(OptimumCertificate::at(p, x, CertificateMethod::HighPrecisionGD));
    }
    Err(OracleError::IterationCap {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Rearranges `perm` into the next permutation in lexicographic order;
/// `false` once `perm` is the last one.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// All permutations of `0..n` in lexicographic order.
pub fn lexicographic_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![perm.clone()];
    while next_permutation(&mut perm) {
        out.push(perm.clone());
    }
    out
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len => {
            let (a, b) = values.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Exact `E‖x_{t+1} − x*‖²` after one RR-SVRG epoch from `s`, averaging over
/// all `n!` equally likely permutations.
pub fn expectation_over_permutations(
    p: &FiniteSumProblem,
    s: &SvrgState,
    x_star: &[f64],
) -> Result<f64, OracleError> {
    let n = p.n();
    if n > MAX_ENUMERATION_N {
        return Err(OracleError::TooLarge {
            n,
            max: MAX_ENUMERATION_N,
        });
    }
    let outcomes = lexicographic_permutations(n)
        .iter()
        .map(|perm| {
            let mut state = s.clone();
            svrg_epoch(p, perm, &mut state)?;
            Ok(dist_sq(&state.x, x_star))
        })
        .collect::<Result<Vec<f64>, OracleError>>()?;
    Ok(pairwise_sum(&outcomes) / outcomes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{synth_ridge, Dataset};

    fn scalar(a: f64, y: f64, lambda: f64) -> FiniteSumProblem {
        let ds = Dataset::new(DenseMatrix::from_rows(&[vec![a]]).unwrap(), vec![y], "s").unwrap();
        FiniteSumProblem::ridge(ds, lambda).unwrap()
    }

    #[test]
    fn identity_design_recovers_labels() {
        let y = vec![0.5, -2.0, 3.25];
        let ds = Dataset::new(DenseMatrix::identity(3), y.clone(), "id").unwrap();
        let p = FiniteSumProblem::ridge(ds, 0.0).unwrap();
        let cert = exact_ridge_optimum(&p).unwrap();
        for (a, b) in cert.x_star.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(cert.method, CertificateMethod::ClosedForm);
    }

    #[test]
    fn scalar_solve() {
        let cert = exact_ridge_optimum(&scalar(2.0, 4.0, 0.0)).unwrap();
        assert_eq!(cert.x_star, vec![2.0]);
        assert_eq!(cert.f_star, 0.0);
    }

    #[test]
    fn closed_form_is_certified() {
        for seed in 0..10 {
            let p = synth_ridge(30, 5, 20.0, seed).unwrap();
            assert!(exact_ridge_optimum(&p).unwrap().is_certified());
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let ds = Dataset::new(
            DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap(),
            vec![1.0, 2.0],
            "rank1",
        )
        .unwrap();
        let p = FiniteSumProblem::ridge(ds, 0.0).unwrap();
        let err = exact_ridge_optimum(&p).unwrap_err();
        assert!(matches!(err, OracleError::Singular(_)));
        assert!(err.to_string().contains("high_precision_optimum"));
        // x = (½, ½) is the least-norm solution of x₁ + x₂ = 1
        let cert = min_norm_ridge_optimum(&p).unwrap();
        assert!((cert.x_star[0] - 0.5).abs() < 1e-12 && (cert.x_star[1] - 0.5).abs() < 1e-12);
        assert!(cert.grad_norm < 1e-12);
    }

    #[test]
    fn min_norm_matches_closed_form_when_regular() {
        let p = synth_ridge(25, 4, 15.0, 9).unwrap();
        let a = exact_ridge_optimum(&p).unwrap();
        let b = min_norm_ridge_optimum(&p).unwrap();
        assert!(dist_sq(&a.x_star, &b.x_star).sqrt() < 1e-9);
    }

    #[test]
    fn gd_agrees_with_closed_form() {
        let p = synth_ridge(30, 5, 20.0, 4).unwrap();
        let a = exact_ridge_optimum(&p).unwrap();
        let b = high_precision_optimum(&p).unwrap();
        assert!(dist_sq(&a.x_star, &b.x_star).sqrt() <= 1e-8);
        assert_eq!(b.method, CertificateMethod::HighPrecisionGD);
    }

    #[test]
    fn logistic_zero_features() {
        let ds = Dataset::new(DenseMatrix::zeros(4, 3), vec![0.0, 1.0, 0.0, 1.0], "z").unwrap();
        let p = FiniteSumProblem::logistic(ds, 0.1).unwrap();
        let cert = high_precision_optimum(&p).unwrap();
        assert_eq!(cert.x_star, vec![0.0; 3]);
    }

    #[test]
    fn separable_logistic_hits_cap() {
        let ds = Dataset::new(DenseMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(), vec![1.0, 0.0], "sep")
            .unwrap();
        let p = FiniteSumProblem::logistic(ds, 0.0).unwrap();
        let opts = GdOptions {
            tolerance: 1e-12,
            max_iterations: 20_000,
        };
        assert!(matches!(
            high_precision_optimum_with(&p, opts),
            Err(OracleError::IterationCap { iterations: 20_000, .. })
        ));
    }

    #[test]
    fn lexicographic_order() {
        let perms = lexicographic_permutations(3);
        assert_eq!(
            perms,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
        assert_eq!(lexicographic_permutations(5).len(), 120);
        assert_eq!(lexicographic_permutations(1), vec![vec![0]]);
    }

    #[test]
    fn pairwise_sum_small() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    #[test]
    fn enumeration_single_component() {
        let p = scalar(1.0, 3.0, 0.0);
        let s = SvrgState::new(vec![0.0], 0.5);
        let mut det = s.clone();
        svrg_epoch(&p, &[0], &mut det).unwrap();
        let e = expectation_over_permutations(&p, &s, &[3.0]).unwrap();
        assert_eq!(e, dist_sq(&det.x, &[3.0]));
    }

    #[test]
    fn enumeration_fixed_point() {
        let ds = Dataset::new(DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(), vec![1.0, -1.0], "pair")
            .unwrap();
        let p = FiniteSumProblem::ridge(ds, 0.0).unwrap();
        let s = SvrgState::new(vec![0.0], 0.3);
        assert_eq!(expectation_over_permutations(&p, &s, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_rejects_large_n() {
        let p = synth_ridge(7, 2, 3.0, 1).unwrap();
        let s = SvrgState::new(vec![0.0; 2], 0.01);
        assert!(matches!(
            expectation_over_permutations(&p, &s, &[0.0, 0.0]),
            Err(OracleError::TooLarge { n: 7, .. })
        ));
    }
}
