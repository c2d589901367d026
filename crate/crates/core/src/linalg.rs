//! Dense complex linear algebra shared by every other module.
//!
//! Everything here is a pure function of its inputs. Matrices are stored
//! densely as [`faer::Mat`]; tolerances are relative to the max-absolute-entry
//! scale of the operands.

use std::fmt;

use faer::linalg::solvers::{Solve, SolveCore};
use faer::{Conj, Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use faer::c64;

/// General dense complex matrix.
pub type ComplexMatrix = Mat<c64>;
/// General dense real matrix.
pub type RealMatrix = Mat<f64>;

/// Relative tolerance of the Hermiticity check in [`HermitianMatrix::new`].
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Eigenvalues of correlation matrices are clamped into `[EPS, 1 - EPS]` before logs.
pub const SPECTRUM_EPS: f64 = 1e-12;
/// How far a correlation-matrix eigenvalue may stray outside `[0, 1]` before it is an error.
pub const SPECTRUM_SLACK: f64 = 1e-9;
/// Condition estimates above this make [`solve_linear`] refuse.
pub const CONDITION_CAP: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian: max |m - m^H| = {deviation:e} at scale {scale:e}")]
    NotHermitian { deviation: f64, scale: f64 },
    #[error("eigenvalue {eigenvalue:e} lies outside the domain {domain}")]
    OutsideDomain {
        eigenvalue: f64,
        domain: SpectralDomain,
    },
    #[error("eigenvalue iteration failed to converge")]
    EigenNoConvergence,
    #[error("spectral radius did not converge in {iterations} iterations (best estimate {estimate})")]
    RadiusNoConvergence { estimate: f64, iterations: usize },
    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("solve residual {residual:e} exceeds bound {bound:e}")]
    Residual { residual: f64, bound: f64 },
}

/// Domain of a scalar function applied through [`spectral_function`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralDomain {
    /// Any real eigenvalue.
    Real,
    /// Strictly positive eigenvalues; values in `[-SLACK, EPS)` are clamped to `EPS`.
    Positive,
    /// Correlation-matrix spectra; `[-SLACK, 1 + SLACK]` is clamped into `[EPS, 1 - EPS]`.
    UnitInterval,
}

impl SpectralDomain {
    fn admit(self, lambda: f64) -> Result<f64, LinalgError> {
        let outside = || LinalgError::OutsideDomain {
            eigenvalue: lambda,
            domain: self,
        };
        match self {
            SpectralDomain::Real => Ok(lambda),
            SpectralDomain::Positive => {
                if lambda < -SPECTRUM_SLACK || !lambda.is_finite() {
                    Err(outside())
                } else {
                    Ok(lambda.max(SPECTRUM_EPS))
                }
            }
            SpectralDomain::UnitInterval => {
                if !(-SPECTRUM_SLACK..=1.0 + SPECTRUM_SLACK).contains(&lambda) {
                    Err(outside())
                } else {
                    Ok(lambda.clamp(SPECTRUM_EPS, 1.0 - SPECTRUM_EPS))
                }
            }
        }
    }
}

impl fmt::Display for SpectralDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralDomain::Real => f.write_str("(-inf, inf)"),
            SpectralDomain::Positive => f.write_str("(0, inf)"),
            SpectralDomain::UnitInterval => f.write_str("[0, 1]"),
        }
    }
}

/// A square complex matrix equal to its own conjugate transpose.
///
/// Construction checks `|m_ij - conj(m_ji)| <= 1e-12 * max|m|` and then
/// symmetrizes, so downstream code sees an exactly Hermitian array.
#[derive(Clone, Debug)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        ensure_square(m.as_ref())?;
        let scale = max_abs(m.as_ref());
        let deviation = hermiticity_defect(m.as_ref());
        if deviation > HERMITICITY_TOL * scale.max(f64::MIN_POSITIVE) && deviation > 0.0 {
            return Err(LinalgError::NotHermitian { deviation, scale });
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds a real symmetric matrix from its lower triangle.
    pub fn from_real_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let m = Mat::from_fn(dim, dim, |i, j| {
            if i >= j {
                c64::new(f(i, j), 0.0)
            } else {
                c64::new(f(j, i), 0.0)
            }
        });
        HermitianMatrix(m)
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        HermitianMatrix(Mat::from_fn(n, n, |i, j| {
            if i == j {
                c64::new(diag[i], 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        }))
    }

    fn symmetrized(m: ComplexMatrix) -> Self {
        let n = m.nrows();
        let sym = Mat::from_fn(n, n, |i, j| {
            if i == j {
                c64::new(m[(i, i)].re, 0.0)
            } else {
                (m[(i, j)] + m[(j, i)].conj()) * 0.5
            }
        });
        HermitianMatrix(sym)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn as_mat(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.0[(i, j)]
    }
}

/// Eigenvalues in ascending order with the matching unitary eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(d) V^H`.
    pub fn reconstruct_with(&self, diag: &[c64]) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.nrows();
        let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * diag[j]);
        &scaled * v.adjoint()
    }
}

pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut out = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

/// `max |m_ij - conj(m_ji)|`.
pub fn hermiticity_defect(m: MatRef<'_, c64>) -> f64 {
    let n = m.nrows();
    let mut out = 0.0_f64;
    for j in 0..n {
        for i in j..n {
            out = out.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    out
}

/// `max |m m^H - I|`.
pub fn unitarity_defect(m: MatRef<'_, c64>) -> f64 {
    let prod = m * m.adjoint();
    let n = prod.nrows();
    let mut out = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            out = out.max((prod[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }
    out
}

fn ensure_square<T>(m: MatRef<'_, T>) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn eig_hermitian(m: &HermitianMatrix) -> Result<EigenDecomposition, LinalgError> {
    let evd = m
        .as_ref()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::EigenNoConvergence)?;
    let s = evd.S();
    let eigenvalues = (0..m.dim()).map(|k| s[k].re).collect();
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: evd.U().to_owned(),
    })
}

/// One-particle propagator `exp(-i m t)`.
pub fn expm_i(m: &HermitianMatrix, t: f64) -> Result<ComplexMatrix, LinalgError> {
    let evd = eig_hermitian(m)?;
    let phases: Vec<c64> = evd
        .eigenvalues
        .iter()
        .map(|&lambda| c64::cis(-lambda * t))
        .collect();
    Ok(evd.reconstruct_with(&phases))
}

/// `V diag(f(lambda_k)) V^H`, with eigenvalues admitted through `domain`.
pub fn spectral_function(
    m: &HermitianMatrix,
    f: impl Fn(f64) -> f64,
    domain: SpectralDomain,
) -> Result<HermitianMatrix, LinalgError> {
    let evd = eig_hermitian(m)?;
    let values = evd
        .eigenvalues
        .iter()
        .map(|&lambda| domain.admit(lambda).map(|l| c64::new(f(l), 0.0)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HermitianMatrix::symmetrized(evd.reconstruct_with(&values)))
}

/// `sum_k f(lambda_k)` without forming the matrix function.
pub fn spectral_trace(
    m: &HermitianMatrix,
    f: impl Fn(f64) -> f64,
    domain: SpectralDomain,
) -> Result<f64, LinalgError> {
    let lambdas = m
        .as_ref()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| LinalgError::EigenNoConvergence)?;
    let mut acc = 0.0;
    for lambda in lambdas {
        acc += f(domain.admit(lambda)?);
    }
    Ok(acc)
}

/// Controls for [`spectral_radius`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusOptions {
    /// Full dense eigenvalue computation up to this dimension, power iteration above.
    pub dense_max_dim: usize,
    pub max_iterations: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self {
            dense_max_dim: 1200,
            max_iterations: 10_000,
            tol: 1e-9,
            restarts: 3,
            seed: 0,
        }
    }
}

/// Largest eigenvalue modulus of a square complex matrix.
pub fn spectral_radius(m: &ComplexMatrix, opts: &RadiusOptions) -> Result<f64, LinalgError> {
    let n = ensure_square(m.as_ref())?;
    if n == 0 {
        return Ok(0.0);
    }
    if n <= opts.dense_max_dim {
        let eig = m
            .eigenvalues()
            .map_err(|_| LinalgError::EigenNoConvergence)?;
        return Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    power_radius(m, opts)
}

/// Largest eigenvalue modulus of a square real matrix.
pub fn spectral_radius_real(m: &RealMatrix, opts: &RadiusOptions) -> Result<f64, LinalgError> {
    let n = ensure_square(m.as_ref())?;
    if n == 0 {
        return Ok(0.0);
    }
    if n <= opts.dense_max_dim {
        let eig = m
            .eigenvalues()
            .map_err(|_| LinalgError::EigenNoConvergence)?;
        return Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let complex = Mat::from_fn(n, n, |i, j| c64::new(m[(i, j)], 0.0));
    power_radius(&complex, opts)
}

// Growth rate averaged over a trailing window, so equal-modulus eigenvalue
// pairs (which make the iterate rotate rather than settle) still converge.
fn power_radius(m: &ComplexMatrix, opts: &RadiusOptions) -> Result<f64, LinalgError> {
    const WINDOW: usize = 32;
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<f64> = None;
    let mut best_unconverged = 0.0_f64;

    for _ in 0..opts.restarts.max(1) {
        let mut v: Vec<c64> = (0..n)
            .map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        normalize(&mut v);
        let mut logs = Vec::with_capacity(opts.max_iterations);
        let mut converged = None;
        for it in 1..=opts.max_iterations {
            let mut w = matvec(m, &v);
            let norm = vec_norm(&w);
            if norm == 0.0 {
                converged = Some(0.0);
                break;
            }
            for z in &mut w {
                *z /= norm;
            }
            v = w;
            logs.push(norm.ln());
            if it >= 2 * WINDOW {
                let k = logs.len();
                let now = (logs[k - WINDOW..].iter().sum::<f64>() / WINDOW as f64).exp();
                let prev =
                    (logs[k - 2 * WINDOW..k - WINDOW].iter().sum::<f64>() / WINDOW as f64).exp();
                best_unconverged = best_unconverged.max(now);
                if (now - prev).abs() <= opts.tol * now.max(1.0) {
                    converged = Some(now);
                    break;
                }
            }
        }
        if let Some(r) = converged {
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best.ok_or(LinalgError::RadiusNoConvergence {
        estimate: best_unconverged,
        iterations: opts.max_iterations,
    })
}

pub fn matvec(m: &ComplexMatrix, v: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj == c64::new(0.0, 0.0) {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * vj;
        }
    }
    out
}

fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [c64]) {
    let n = vec_norm(v);
    if n > 0.0 {
        for z in v {
            *z /= n;
        }
    }
}

fn inf_norm_vec(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn inf_norm_mat(m: &ComplexMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn one_norm_mat(m: &ComplexMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `a x = b` by partial-pivot LU.
///
/// Refuses when the 1-norm condition estimate exceeds [`CONDITION_CAP`]; on
/// success the residual satisfies
/// `|a x - b|_inf <= 1e-10 (|a|_inf |x|_inf + |b|_inf)`.
pub fn solve_linear(a: &ComplexMatrix, b: &[c64]) -> Result<Vec<c64>, LinalgError> {
    let n = ensure_square(a.as_ref())?;
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let lu = a.partial_piv_lu();
    let condition = one_norm_mat(a) * inverse_one_norm_estimate(&lu, n);
    if !condition.is_finite() || condition > CONDITION_CAP {
        return Err(LinalgError::Singular { condition });
    }

    let solve = |rhs: &[c64]| -> Vec<c64> {
        let mut col = Mat::from_fn(n, 1, |i, _| rhs[i]);
        lu.solve_in_place(col.as_mut());
        (0..n).map(|i| col[(i, 0)]).collect()
    };

    let mut x = solve(b);
    let a_norm = inf_norm_mat(a);
    let b_norm = inf_norm_vec(b);
    let residual_of = |x: &[c64]| -> Vec<c64> {
        let ax = matvec(a, x);
        b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect()
    };

    let mut r = residual_of(&x);
    let mut bound = 1e-10 * (a_norm * inf_norm_vec(&x) + b_norm);
    if inf_norm_vec(&r) > bound {
        // one step of iterative refinement
        let dx = solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
        r = residual_of(&x);
        bound = 1e-10 * (a_norm * inf_norm_vec(&x) + b_norm);
    }
    let residual = inf_norm_vec(&r);
    if !(residual <= bound) {
        return Err(LinalgError::Residual { residual, bound });
    }
    Ok(x)
}

// Hager's estimator of |A^{-1}|_1 (Higham's complex variant), using the LU factors.
fn inverse_one_norm_estimate<L: SolveCore<c64>>(lu: &L, n: usize) -> f64 {
    let mut x = Mat::from_fn(n, 1, |_, _| c64::new(1.0 / n as f64, 0.0));
    let mut estimate = 0.0;
    for iteration in 0..5 {
        let mut y = x.clone();
        lu.solve_in_place_with_conj(Conj::No, y.as_mut());
        let y_norm: f64 = (0..n).map(|i| y[(i, 0)].norm()).sum();
        if !y_norm.is_finite() {
            return f64::INFINITY;
        }
        estimate = y_norm;
        let mut z = Mat::from_fn(n, 1, |i, _| {
            let yi = y[(i, 0)];
            let a = yi.norm();
            if a == 0.0 {
                c64::new(1.0, 0.0)
            } else {
                yi / a
            }
        });
        lu.solve_transpose_in_place_with_conj(Conj::Yes, z.as_mut());
        let (j_max, z_max) = (0..n)
            .map(|i| (i, z[(i, 0)].norm()))
            .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        let zx: f64 = (0..n).map(|i| (z[(i, 0)].conj() * x[(i, 0)]).re).sum();
        if iteration > 0 && z_max <= zx {
            break;
        }
        x = Mat::from_fn(n, 1, |i, _| {
            if i == j_max {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
    }
    estimate
}
