//! Datasets and the two finite-sum objectives: ridge and logistic regression.
//!
//! Both objectives have the form `f(x) = (1/n) Σᵢ fᵢ(x)` with
//!
//! - ridge:    `fᵢ(x) = ½(aᵢᵀx − yᵢ)² + (λ/2)‖x‖²`
//! - logistic: `fᵢ(x) = log(1 + exp(−yᵢ aᵢᵀx)) + (λ/2)‖x‖²`, `yᵢ ∈ {−1, +1}`

use std::io::BufRead;

use thiserror::Error;

use crate::linalg::{axpy, dot, extreme_eigenvalues, norm_sq, DenseMatrix, LinalgError, PowerIteration};
use crate::sampling::RngState;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no samples")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("logistic regression needs exactly two distinct labels, found {0}")]
    Labels(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
    #[error("eigenvalue computation failed: {0}")]
    Eigen(#[from] LinalgError),
}

/// Dense feature matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(
        features: DenseMatrix,
        labels: Vec<f64>,
        name: impl Into<String>,
    ) -> Result<Self, ProblemError> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(ProblemError::Empty);
        }
        if labels.len() != features.rows() {
            return Err(ProblemError::Dimension {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        for i in 0..features.rows() {
            if let Some(col) = features.row(i).iter().position(|v| !v.is_finite()) {
                return Err(ProblemError::NonFinite { row: i, col });
            }
            if !labels[i].is_finite() {
                return Err(ProblemError::NonFinite {
                    row: i,
                    col: usize::MAX,
                });
            }
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }

    /// Divide every row by its Euclidean norm. Zero rows pass through.
    pub fn normalize_rows(&self) -> Dataset {
        let mut features = self.features.clone();
        for i in 0..features.rows() {
            let row = features.row_mut(i);
            let norm = norm_sq(row).sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Dataset {
            features,
            labels: self.labels.clone(),
            name: self.name.clone(),
        }
    }
}

/// Parse LIBSVM text (`<label> <idx>:<val> ...`, 1-based increasing indices)
/// into a dense dataset. Blank lines are skipped.
pub fn load_libsvm<R: BufRead>(source: R, name: &str) -> Result<Dataset, ProblemError> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = 0usize;
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let parse_err = |message: String| ProblemError::Parse {
            line: lineno,
            message,
        };
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let label: f64 = label
            .parse()
            .map_err(|_| parse_err(format!("malformed label {label:?}")))?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(format!("malformed token {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(format!("malformed index in {tok:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(format!("malformed value in {tok:?}")))?;
            if idx == 0 {
                return Err(parse_err("indices are 1-based".into()));
            }
            if idx <= last {
                return Err(parse_err(format!(
                    "non-increasing index {idx} after {last}"
                )));
            }
            if !val.is_finite() {
                return Err(parse_err(format!("non-finite value in {tok:?}")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        d = d.max(last);
        labels.push(label);
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(ProblemError::Empty);
    }
    if d == 0 {
        return Err(ProblemError::Parse {
            line: 1,
            message: "no features".into(),
        });
    }
    let mut features = DenseMatrix::zeros(rows.len(), d);
    for (i, entries) in rows.iter().enumerate() {
        let row = features.row_mut(i);
        for &(j, v) in entries {
            row[j] = v;
        }
    }
    Dataset::new(features, labels, name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Ridge,
    Logistic,
}

/// A ridge or logistic instance with its smoothness and strong-convexity
/// constants.
#[derive(Debug, Clone)]
pub struct FiniteSumProblem {
    kind: LossKind,
    dataset: Dataset,
    lambda: f64,
    smoothness: f64,
    strong_convexity: f64,
}

impl FiniteSumProblem {
    pub fn ridge(dataset: Dataset, lambda: f64) -> Result<Self, ProblemError> {
        Self::build(LossKind::Ridge, dataset, lambda)
    }

    /// Labels are remapped to ±1: the smaller of the two distinct values
    /// becomes −1.
    pub fn logistic(mut dataset: Dataset, lambda: f64) -> Result<Self, ProblemError> {
        let mut distinct = dataset.labels.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() != 2 {
            return Err(ProblemError::Labels(distinct.len()));
        }
        let low = distinct[0];
        for y in dataset.labels.iter_mut() {
            *y = if *y == low { -1.0 } else { 1.0 };
        }
        Self::build(LossKind::Logistic, dataset, lambda)
    }

    pub fn new(kind: LossKind, dataset: Dataset, lambda: f64) -> Result<Self, ProblemError> {
        match kind {
            LossKind::Ridge => Self::ridge(dataset, lambda),
            LossKind::Logistic => Self::logistic(dataset, lambda),
        }
    }

    fn build(kind: LossKind, dataset: Dataset, lambda: f64) -> Result<Self, ProblemError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ProblemError::InvalidParameter(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        let (smoothness, strong_convexity) = smoothness_constants(kind, &dataset, lambda)?;
        Ok(Self {
            kind,
            dataset,
            lambda,
            smoothness,
            strong_convexity,
        })
    }

    /// Same data, different regularizer; constants are recomputed.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ProblemError> {
        Self::build(self.kind, self.dataset.clone(), lambda)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `L`
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// `μ`; zero means only the convex theory applies.
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn condition_number(&self) -> f64 {
        self.smoothness / self.strong_convexity
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn d(&self) -> usize {
        self.dataset.d()
    }

    fn check_index(&self, i: usize) -> Result<(), ProblemError> {
        if i >= self.n() {
            return Err(ProblemError::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ProblemError> {
        if x.len() != self.d() {
            return Err(ProblemError::Dimension {
                expected: self.d(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn component_value(&self, i: usize, x: &[f64]) -> Result<f64, ProblemError> {
        self.check_index(i)?;
        self.check_dim(x)?;
        Ok(self.value_unchecked(i, x))
    }

    pub fn component_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_index(i)?;
        self.check_dim(x)?;
        let mut g = vec![0.0; self.d()];
        self.grad_into(i, x, &mut g);
        Ok(g)
    }

    pub(crate) fn value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let a = self.dataset.features.row(i);
        let y = self.dataset.labels[i];
        let reg = 0.5 * self.lambda * norm_sq(x);
        match self.kind {
            LossKind::Ridge => {
                let r = dot(a, x) - y;
                0.5 * r * r + reg
            }
            LossKind::Logistic => softplus(-y * dot(a, x)) + reg,
        }
    }

    /// Writes `∇fᵢ(x)` into `out` (overwrites).
    pub(crate) fn grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let a = self.dataset.features.row(i);
        let y = self.dataset.labels[i];
        let scale = match self.kind {
            LossKind::Ridge => dot(a, x) - y,
            LossKind::Logistic => -y * sigmoid(-y * dot(a, x)),
        };
        for ((o, &aj), &xj) in out.iter_mut().zip(a).zip(x) {
            *o = scale * aj + self.lambda * xj;
        }
    }

    /// `f(x) = (1/n) Σ fᵢ(x)`
    pub fn full_value(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let s: f64 = (0..n).map(|i| self.value_unchecked(i, x)).sum();
        s / n as f64
    }

    /// `∇f(x)`, accumulated as the mean of the component gradients.
    pub fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        self.full_grad_into(x, &mut out);
        out
    }

    pub(crate) fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        let mut g = vec![0.0; self.d()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.grad_into(i, x, &mut g);
            axpy(1.0, &g, out);
        }
        let inv = n as f64;
        out.iter_mut().for_each(|v| *v /= inv);
    }
}

fn softplus(z: f64) -> f64 {
    // log(1 + e^z) without overflow
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(L, μ)` for the given objective.
///
/// - ridge:    `L = maxᵢ‖aᵢ‖² + λ`, `μ = λ_min(AᵀA)/n + λ`
/// - logistic: `L = λ_max(AᵀA)/(4n) + λ`, `μ = λ`
///
/// The ridge `L` bounds each component's curvature while `μ` is the curvature
/// of the average; both are kept exactly in this form.
pub fn smoothness_constants(
    kind: LossKind,
    dataset: &Dataset,
    lambda: f64,
) -> Result<(f64, f64), ProblemError> {
    let n = dataset.n() as f64;
    let gram = dataset.features.gram();
    let power = PowerIteration::default();
    match kind {
        LossKind::Ridge => {
            let max_row = (0..dataset.n())
                .map(|i| norm_sq(dataset.features.row(i)))
                .fold(0.0, f64::max);
            let (smallest, _) = extreme_eigenvalues(&gram, &power)?;
            let smoothness = max_row + lambda;
            let mu = (smallest / n + lambda).min(smoothness);
            Ok((smoothness, mu))
        }
        LossKind::Logistic => {
            let (_, largest) = extreme_eigenvalues(&gram, &power)?;
            Ok((largest / (4.0 * n) + lambda, lambda))
        }
    }
}

/// Gaussian ridge instance whose realized `κ = L/μ` is calibrated to
/// `condition_target`.
///
/// Features are i.i.d. standard normal with column `j` scaled by `s^(j/(d−1))`,
/// then rows are normalized (so `L = 1 + λ`). If the unscaled design is already
/// worse conditioned than the target, `λ` is raised instead; otherwise `λ = 0`
/// and the column spread `s` is found by bisection. Labels are
/// `A x_true + 0.1·noise`.
pub fn synth_ridge(
    n: usize,
    d: usize,
    condition_target: f64,
    seed: u64,
) -> Result<FiniteSumProblem, ProblemError> {
    if d == 0 || n < d {
        return Err(ProblemError::InvalidParameter(format!(
            "need n >= d >= 1, got n = {n}, d = {d}"
        )));
    }
    if !(condition_target > 1.0 && condition_target.is_finite()) {
        return Err(ProblemError::InfeasibleTarget(format!(
            "condition target must exceed 1, got {condition_target}"
        )));
    }
    let mut rng = RngState::new(seed);
    let base: Vec<f64> = (0..n * d).map(|_| rng.gaussian()).collect();
    let x_true: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();

    let design = |log_spread: f64| -> Result<Dataset, ProblemError> {
        let mut a = DenseMatrix::from_row_major(n, d, base.clone())?;
        for i in 0..n {
            let row = a.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                let t = if d > 1 { j as f64 / (d - 1) as f64 } else { 0.0 };
                *v *= (log_spread * t).exp();
            }
        }
        let mut labels = a.mul_vec(&x_true);
        for (y, e) in labels.iter_mut().zip(&noise) {
            *y += 0.1 * e;
        }
        Ok(Dataset::new(a, labels, format!("synth_ridge(n={n},d={d},kappa={condition_target},seed={seed})"))?
            .normalize_rows())
    };
    let kappa_at = |log_spread: f64| -> Result<(Dataset, f64), ProblemError> {
        let ds = design(log_spread)?;
        let (l, mu) = smoothness_constants(LossKind::Ridge, &ds, 0.0)?;
        Ok((ds, if mu > 0.0 { l / mu } else { f64::INFINITY }))
    };

    let (ds0, kappa0) = kappa_at(0.0)?;
    if d == 1 || kappa0 <= 1.0 + 1e-12 {
        return Err(ProblemError::InfeasibleTarget(format!(
            "design with d = {d} has kappa = 1 for every regularizer"
        )));
    }
    if kappa0 >= condition_target {
        // (1 + λ)/(m + λ) = κ  ⇒  λ = (1 − κ m)/(κ − 1)
        let (_, mu0) = smoothness_constants(LossKind::Ridge, &ds0, 0.0)?;
        let lambda = (1.0 - condition_target * mu0) / (condition_target - 1.0);
        return FiniteSumProblem::ridge(ds0, lambda.max(0.0));
    }
    // κ grows as the spread shrinks the last columns.
    let (mut lo, mut hi) = (-30.0_f64, 0.0_f64);
    let mut best = (ds0, kappa0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (ds, kappa) = kappa_at(mid)?;
        if kappa > condition_target {
            lo = mid;
        } else {
            hi = mid;
        }
        best = (ds, kappa);
        if (best.1 / condition_target - 1.0).abs() < 1e-6 {
            break;
        }
    }
    if (best.1 / condition_target - 1.0).abs() > 0.1 {
        return Err(ProblemError::InfeasibleTarget(format!(
            "could not reach kappa {condition_target} (best {})",
            best.1
        )));
    }
    FiniteSumProblem::ridge(best.0, 0.0)
}
