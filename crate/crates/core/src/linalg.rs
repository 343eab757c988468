//! Small dense linear-algebra kernels.
//!
//! Everything is plain sequential `f64` arithmetic over slices so that the
//! summation order is fixed and results are bit-reproducible.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::Dimension {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `AᵀA`, a `cols × cols` symmetric matrix.
    pub fn gram(&self) -> DenseMatrix {
        let d = self.cols;
        let mut g = DenseMatrix::zeros(d, d);
        for i in 0..self.rows {
            let r = self.row(i);
            for j in 0..d {
                let rj = r[j];
                if rj == 0.0 {
                    continue;
                }
                for k in j..d {
                    g.data[j * d + k] += rj * r[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                g.data[j * d + k] = g.data[k * d + j];
            }
        }
        g
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm_sq(v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn sym_mul_vec(m: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(m.row(i), x);
    }
}

/// Settings for the power iteration used on Gram matrices.
#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

impl PowerIteration {
    /// Dominant eigenvalue of a symmetric positive semidefinite matrix.
    ///
    /// The start vector is fixed (all ones plus a small index ramp) so that
    /// results do not depend on any random state.
    pub fn largest(&self, m: &DenseMatrix) -> Result<f64, LinalgError> {
        self.run(m, None)
    }

    /// Smallest eigenvalue of a symmetric PSD matrix via power iteration on
    /// `λ_max·I − M`.
    pub fn smallest(&self, m: &DenseMatrix) -> Result<f64, LinalgError> {
        let top = self.largest(m)?;
        if top == 0.0 {
            return Ok(0.0);
        }
        let shifted_top = self.run(m, Some(top))?;
        Ok((top - shifted_top).clamp(0.0, top))
    }

    fn run(&self, m: &DenseMatrix, shift: Option<f64>) -> Result<f64, LinalgError> {
        let d = m.rows();
        if d == 1 {
            return Ok(match shift {
                Some(s) => s - m[(0, 0)],
                None => m[(0, 0)],
            });
        }
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * (i as f64) / (d as f64)).collect();
        normalize(&mut v);
        let mut w = vec![0.0; d];
        let mut lambda = 0.0;
        let scale = match shift {
            Some(s) => s,
            None => (0..d).map(|i| m[(i, i)]).sum::<f64>().max(f64::MIN_POSITIVE),
        };
        let mut residual = f64::INFINITY;
        let mut previous = f64::NAN;
        for _ in 0..self.max_iterations {
            sym_mul_vec(m, &v, &mut w);
            if let Some(s) = shift {
                for (wi, vi) in w.iter_mut().zip(&v) {
                    *wi = s * vi - *wi;
                }
            }
            lambda = dot(&v, &w);
            // ‖Mv − λv‖ relative to the spectrum scale
            residual = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt()
                / scale;
            if residual <= self.tolerance || (lambda - previous).abs() <= self.tolerance * scale {
                return Ok(lambda);
            }
            previous = lambda;
            if normalize(&mut w) == 0.0 {
                // v lies in the null space
                return Ok(0.0);
            }
            std::mem::swap(&mut v, &mut w);
        }
        // A residual that stalls at a tiny level is still an accurate eigenvalue:
        // a Rayleigh quotient error is quadratic in the eigenvector error.
        if residual.powi(2) <= self.tolerance {
            return Ok(lambda);
        }
        Err(LinalgError::NoConvergence {
            iterations: self.max_iterations,
            residual,
        })
    }
}

/// Largest dimension for which [`extreme_eigenvalues`] diagonalizes fully.
pub const JACOBI_MAX_DIM: usize = 64;

/// `(λ_min, λ_max)` of a symmetric PSD matrix.
///
/// Uses cyclic Jacobi up to [`JACOBI_MAX_DIM`] and power iteration above.
/// Power iteration converges at the rate of the eigenvalue gap, which for
/// clustered Gram spectra is too slow to reach the tolerance within the cap.
pub fn extreme_eigenvalues(m: &DenseMatrix, power: &PowerIteration) -> Result<(f64, f64), LinalgError> {
    if m.rows() <= JACOBI_MAX_DIM {
        let (values, _) = jacobi_eigen(m);
        let top = values.last().copied().unwrap_or(0.0).max(0.0);
        Ok((values.first().copied().unwrap_or(0.0).clamp(0.0, top), top))
    } else {
        Ok((power.smallest(m)?, power.largest(m)?))
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(m: &DenseMatrix) -> Result<Self, LinalgError> {
        let n = m.rows();
        let mut l = DenseMatrix::zeros(n, n);
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        for j in 0..n {
            let mut diag = m[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 1e-14 * scale) {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let mut z = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                z[i] -= self.l[(i, k)] * z[k];
            }
            z[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                z[i] -= self.l[(k, i)] * z[k];
            }
            z[i] /= self.l[(i, i)];
        }
        z
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as the
/// columns of the returned matrix; eigenvalues are sorted ascending.
pub fn jacobi_eigen(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        let total: f64 = a.as_slice().iter().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new_col)] = v[(k, old_col)];
        }
    }
    (values, vectors)
}
