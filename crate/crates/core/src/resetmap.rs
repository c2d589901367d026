//! The eta-reset cycle as an exact affine map on the kept SPDM entries.
//!
//! A cycle is unitary evolution for time `tau` followed by a reset that keeps
//! the system occupation, multiplies the system-bath coherences by `eta`, and
//! restores the bath block to the thermal reference. All vectors here are in
//! the bath eigenbasis.

use faer::Mat;
use thiserror::Error;

use crate::linalg::{
    self, c64, expm_i, matvec, unitarity_defect, ComplexMatrix, HermitianMatrix, LinalgError,
    RadiusOptions, RealMatrix,
};
use crate::model::{eigenbasis_hamiltonian, fermi, BathBasis, ReferenceBathState, SystemSpec};

/// Reassembled propagators must be unitary to this accuracy.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResetMapError {
    #[error("retention parameter eta = {0} is outside [0, 1]")]
    EtaOutOfRange(f64),
    #[error("reset interval tau = {0} must be finite and non-negative")]
    InvalidTau(f64),
    #[error("propagator is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("marginal map: spectral radius {rho} >= 1 - {margin:e}; use the iterative solver")]
    Marginal { rho: f64, margin: f64 },
    #[error("divergent map: spectral radius {0} > 1")]
    Divergent(f64),
    #[error("iteration did not converge in {cycles} cycles (last increment {increment:e})")]
    NoConvergence { cycles: usize, increment: f64 },
    #[error("fixed point violates Hermiticity: |y - x^H| = {0:e}")]
    Hermiticity(f64),
    #[error("fixed point residual {0:e} exceeds 1e-9")]
    Residual(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `U(tau) = [[u, v], [w, X]]` split at the system index.
#[derive(Clone, Debug)]
pub struct PropagatorBlocks {
    pub u: c64,
    /// Row `U[0, 1..]`.
    pub v: Vec<c64>,
    /// Column `U[1.., 0]`.
    pub w: Vec<c64>,
    pub x: ComplexMatrix,
}

impl PropagatorBlocks {
    pub fn n_modes(&self) -> usize {
        self.v.len()
    }

    pub fn assemble(&self) -> ComplexMatrix {
        let n = self.n_modes();
        Mat::from_fn(1 + n, 1 + n, |a, b| match (a, b) {
            (0, 0) => self.u,
            (0, k) => self.v[k - 1],
            (k, 0) => self.w[k - 1],
            (i, j) => self.x[(i - 1, j - 1)],
        })
    }
}

pub fn split_propagator(u_full: &ComplexMatrix) -> Result<PropagatorBlocks, ResetMapError> {
    let dim = u_full.nrows();
    if dim < 2 || u_full.ncols() != dim {
        return Err(ResetMapError::Dimension(format!(
            "propagator must be square with dimension >= 2, got {}x{}",
            u_full.nrows(),
            u_full.ncols()
        )));
    }
    let defect = unitarity_defect(u_full.as_ref());
    if !(defect <= UNITARITY_TOL) {
        return Err(ResetMapError::NotUnitary(defect));
    }
    let n = dim - 1;
    Ok(PropagatorBlocks {
        u: u_full[(0, 0)],
        v: (0..n).map(|k| u_full[(0, k + 1)]).collect(),
        w: (0..n).map(|k| u_full[(k + 1, 0)]).collect(),
        x: Mat::from_fn(n, n, |i, j| u_full[(i + 1, j + 1)]),
    })
}

/// One-cycle propagator in the bath eigenbasis.
pub fn propagator(
    basis: &BathBasis,
    sys: &SystemSpec,
    tau: f64,
) -> Result<PropagatorBlocks, ResetMapError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(ResetMapError::InvalidTau(tau));
    }
    let m = eigenbasis_hamiltonian(basis, sys);
    split_propagator(&expm_i(&m, tau)?)
}

/// Kept entries `(P, x, y)` treated as independent complex components.
#[derive(Clone, Debug, PartialEq)]
pub struct KeptEntries {
    pub p: c64,
    pub x: Vec<c64>,
    pub y: Vec<c64>,
}

impl KeptEntries {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: c64::new(0.0, 0.0),
            x: vec![c64::new(0.0, 0.0); n],
            y: vec![c64::new(0.0, 0.0); n],
        }
    }

    /// Ordering `(P, x_1..x_N, y_1..y_N)`.
    pub fn to_vec(&self) -> Vec<c64> {
        let mut out = Vec::with_capacity(1 + 2 * self.x.len());
        out.push(self.p);
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.y);
        out
    }

    pub fn from_slice(w: &[c64]) -> Self {
        let n = (w.len() - 1) / 2;
        Self {
            p: w[0],
            x: w[1..1 + n].to_vec(),
            y: w[1 + n..].to_vec(),
        }
    }
}

/// Post-reset SPDM `[[P, x], [y, C0]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockedSpdm {
    pub p: f64,
    /// System-to-bath coherences `rho[0, k]`.
    pub x: Vec<c64>,
    /// Bath-to-system coherences `rho[k, 0]`.
    pub y: Vec<c64>,
    /// Bath block, diagonal in the eigenbasis.
    pub bath: Vec<f64>,
}

impl BlockedSpdm {
    /// Occupation `p`, no coherences, bath at the reference state.
    pub fn product(p: f64, c0: &ReferenceBathState) -> Self {
        let n = c0.n_modes();
        Self {
            p,
            x: vec![c64::new(0.0, 0.0); n],
            y: vec![c64::new(0.0, 0.0); n],
            bath: c0.occupations.clone(),
        }
    }

    /// Product state with the system level thermal at `(beta, mu)`.
    pub fn thermal(sys: &SystemSpec, c0: &ReferenceBathState) -> Self {
        Self::product(fermi(sys.omega0, sys.beta, sys.mu), c0)
    }

    pub fn n_modes(&self) -> usize {
        self.x.len()
    }

    pub fn kept(&self) -> KeptEntries {
        KeptEntries {
            p: c64::new(self.p, 0.0),
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }

    /// `max_k |y_k - conj(x_k)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| (y - x.conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn coherence_norm_sqr(&self) -> f64 {
        self.x.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn assemble(&self) -> ComplexMatrix {
        let n = self.n_modes();
        Mat::from_fn(1 + n, 1 + n, |a, b| match (a, b) {
            (0, 0) => c64::new(self.p, 0.0),
            (0, k) => self.x[k - 1],
            (k, 0) => self.y[k - 1],
            (i, j) if i == j => c64::new(self.bath[i - 1], 0.0),
            _ => c64::new(0.0, 0.0),
        })
    }
}

fn check_eta(eta: f64) -> Result<(), ResetMapError> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(ResetMapError::EtaOutOfRange(eta))
    }
}

fn check_sizes(n: usize, other: usize, what: &str) -> Result<(), ResetMapError> {
    if n == other {
        Ok(())
    } else {
        Err(ResetMapError::Dimension(format!(
            "{what} has {other} modes, propagator has {n}"
        )))
    }
}

/// One cycle on independent kept entries; `O(N^2)`.
pub fn step_kept(
    state: &KeptEntries,
    blocks: &PropagatorBlocks,
    eta: f64,
    c0: &ReferenceBathState,
) -> KeptEntries {
    let (u, v, w, xm) = (blocks.u, &blocks.v, &blocks.w, &blocks.x);
    let n_k = &c0.occupations;
    let (p, x, y) = (state.p, &state.x, &state.y);

    let vy: c64 = v.iter().zip(y).map(|(a, b)| a * b).sum();
    let xv: c64 = x.iter().zip(v).map(|(a, b)| a * b.conj()).sum();
    let vcv: f64 = v.iter().zip(n_k).map(|(a, n)| a.norm_sqr() * n).sum();
    let p_new = c64::new(u.norm_sqr(), 0.0) * p + u.conj() * vy + u * xv + vcv;

    // sum_j conj(X_kj) r_j = conj((X conj(r))_k)
    let r_conj: Vec<c64> = (0..x.len())
        .map(|j| (u * x[j] + v[j] * n_k[j]).conj())
        .collect();
    let xr = matvec(xm, &r_conj);
    let a = u * p + vy;
    let x_new = (0..x.len())
        .map(|k| (a * w[k].conj() + xr[k].conj()) * eta)
        .collect();

    let s: Vec<c64> = (0..y.len())
        .map(|j| y[j] * u.conj() + v[j].conj() * n_k[j])
        .collect();
    let xs = matvec(xm, &s);
    let b = u.conj() * p + xv;
    let y_new = (0..y.len()).map(|k| (w[k] * b + xs[k]) * eta).collect();

    KeptEntries {
        p: p_new,
        x: x_new,
        y: y_new,
    }
}

pub fn one_cycle(
    state: &BlockedSpdm,
    blocks: &PropagatorBlocks,
    eta: f64,
    c0: &ReferenceBathState,
) -> Result<BlockedSpdm, ResetMapError> {
    check_eta(eta)?;
    check_sizes(blocks.n_modes(), state.n_modes(), "state")?;
    check_sizes(blocks.n_modes(), c0.n_modes(), "reference state")?;
    let next = step_kept(&state.kept(), blocks, eta, c0);
    Ok(BlockedSpdm {
        p: next.p.re,
        x: next.x,
        y: next.y,
        bath: c0.occupations.clone(),
    })
}

/// `W -> a W + b` on the ordering `(P, x_1..x_N, y_1..y_N)`.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub a: ComplexMatrix,
    pub b: Vec<c64>,
    pub eta: f64,
}

impl AffineMap {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn n_modes(&self) -> usize {
        (self.dim() - 1) / 2
    }

    pub fn apply(&self, w: &[c64]) -> Vec<c64> {
        matvec(&self.a, w)
            .into_iter()
            .zip(&self.b)
            .map(|(aw, b)| aw + b)
            .collect()
    }

    /// `a` in the real coordinates `(P, Re x_k, Im x_k)` of the subspace `y = conj(x)`.
    ///
    /// The map commutes with `(P, x, y) -> (conj P, conj y, conj x)`, so the
    /// real form has exactly the same spectrum at half the complex dimension.
    pub fn real_form(&self) -> RealMatrix {
        let n = self.n_modes();
        let a = &self.a;
        // image of a basis vector, read back in real coordinates
        let coords = |col: &dyn Fn(usize) -> c64, row: usize| -> f64 {
            if row == 0 {
                col(0).re
            } else if row <= n {
                col(row).re
            } else {
                col(row - n).im
            }
        };
        Mat::from_fn(1 + 2 * n, 1 + 2 * n, |row, c| {
            if c == 0 {
                coords(&|i| a[(i, 0)], row)
            } else if c <= n {
                let j = c;
                coords(&|i| a[(i, j)] + a[(i, j + n)], row)
            } else {
                let j = c - n;
                let i_unit = c64::new(0.0, 1.0);
                coords(&|i| i_unit * (a[(i, j)] - a[(i, j + n)]), row)
            }
        })
    }

    pub fn spectral_radius(&self, opts: &RadiusOptions) -> Result<f64, LinalgError> {
        linalg::spectral_radius_real(&self.real_form(), opts)
    }
}

pub fn assemble_affine(
    blocks: &PropagatorBlocks,
    eta: f64,
    c0: &ReferenceBathState,
) -> Result<AffineMap, ResetMapError> {
    check_eta(eta)?;
    let n = blocks.n_modes();
    check_sizes(n, c0.n_modes(), "reference state")?;
    let (u, v, w, xm) = (blocks.u, &blocks.v, &blocks.w, &blocks.x);
    let occ = &c0.occupations;
    let e = c64::new(eta, 0.0);
    let zero = c64::new(0.0, 0.0);

    let a = Mat::from_fn(1 + 2 * n, 1 + 2 * n, |row, col| {
        let block = |i: usize| if i == 0 { 0 } else if i <= n { 1 } else { 2 };
        let idx = |i: usize| if i <= n { i - 1 } else { i - 1 - n };
        match (block(row), block(col)) {
            (0, 0) => c64::new(u.norm_sqr(), 0.0),
            (0, 1) => u * v[idx(col)].conj(),
            (0, 2) => u.conj() * v[idx(col)],
            (1, 0) => e * u * w[idx(row)].conj(),
            (1, 1) => e * u * xm[(idx(row), idx(col))].conj(),
            (1, 2) => e * v[idx(col)] * w[idx(row)].conj(),
            (2, 0) => e * w[idx(row)] * u.conj(),
            (2, 1) => e * w[idx(row)] * v[idx(col)].conj(),
            (2, 2) => e * u.conj() * xm[(idx(row), idx(col))],
            _ => zero,
        }
    });

    let vn: Vec<c64> = (0..n).map(|j| v[j] * occ[j]).collect();
    let vn_conj: Vec<c64> = vn.iter().map(|z| z.conj()).collect();
    let x_vn_conj = matvec(xm, &vn_conj);
    let mut b = Vec::with_capacity(1 + 2 * n);
    b.push(c64::new(
        (0..n).map(|j| v[j].norm_sqr() * occ[j]).sum::<f64>(),
        0.0,
    ));
    // conj(X) (v n) = conj(X conj(v n))
    b.extend(x_vn_conj.iter().map(|z| e * z.conj()));
    b.extend(x_vn_conj.iter().map(|z| e * z));
    Ok(AffineMap { a, b, eta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedPointMethod {
    Direct,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub state: BlockedSpdm,
    pub pre_reset_bath: HermitianMatrix,
    /// `diag(C_pre - C0)`, see [`occupation_shift`].
    pub occupation_shift: Vec<f64>,
    /// Spectral radius of `a`; NaN when the iterative solver ran alone.
    pub rho_spectral: f64,
    pub method: FixedPointMethod,
    pub iterations: usize,
    /// `|W - (a W + b)|_inf`.
    pub residual: f64,
}

/// Tolerances for the fixed-point solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub radius: RadiusOptions,
    /// Direct solve requires `rho < 1 - marginal_margin`.
    pub marginal_margin: f64,
    /// Above `1 + divergence_margin` the map is reported divergent.
    pub divergence_margin: f64,
    pub iter_tol: f64,
    pub max_cycles: usize,
    /// Weight of the new iterate in the damped fallback.
    pub damping: f64,
    pub hermiticity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            radius: RadiusOptions::default(),
            marginal_margin: 1e-8,
            divergence_margin: 1e-6,
            iter_tol: 1e-12,
            max_cycles: 200_000,
            damping: 0.5,
            hermiticity_tol: 1e-9,
        }
    }
}

fn inf_norm_diff(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn finish(
    w: KeptEntries,
    c0: &ReferenceBathState,
    hermiticity_tol: f64,
) -> Result<BlockedSpdm, ResetMapError> {
    let defect = w
        .x
        .iter()
        .zip(&w.y)
        .map(|(x, y)| (y - x.conj()).norm())
        .fold(w.p.im.abs(), f64::max);
    if !(defect <= hermiticity_tol) {
        return Err(ResetMapError::Hermiticity(defect));
    }
    Ok(BlockedSpdm {
        p: w.p.re,
        y: w.x.iter().map(|z| z.conj()).collect(),
        x: w.x,
        bath: c0.occupations.clone(),
    })
}

/// `W = (I - a)^{-1} b`, refusing maps that are not strictly contracting.
pub fn fixed_point_direct(
    map: &AffineMap,
    blocks: &PropagatorBlocks,
    c0: &ReferenceBathState,
    opts: &SolverOptions,
) -> Result<FixedPointResult, ResetMapError> {
    let rho = map.spectral_radius(&opts.radius)?;
    fixed_point_direct_with_radius(map, blocks, c0, rho, opts)
}

fn fixed_point_direct_with_radius(
    map: &AffineMap,
    blocks: &PropagatorBlocks,
    c0: &ReferenceBathState,
    rho: f64,
    opts: &SolverOptions,
) -> Result<FixedPointResult, ResetMapError> {
    if !(rho < 1.0 - opts.marginal_margin) {
        return Err(ResetMapError::Marginal {
            rho,
            margin: opts.marginal_margin,
        });
    }
    let dim = map.dim();
    let i_minus_a = Mat::from_fn(dim, dim, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        c64::new(id, 0.0) - map.a[(i, j)]
    });
    let w = linalg::solve_linear(&i_minus_a, &map.b)?;
    let residual = inf_norm_diff(&w, &map.apply(&w));
    if !(residual <= 1e-9) {
        return Err(ResetMapError::Residual(residual));
    }
    let state = finish(KeptEntries::from_slice(&w), c0, opts.hermiticity_tol)?;
    let pre = HermitianMatrix::new(pre_reset_bath(&state, blocks, c0))?;
    let shift = occupation_shift(&state, blocks, c0);
    Ok(FixedPointResult {
        state,
        pre_reset_bath: pre,
        occupation_shift: shift,
        rho_spectral: rho,
        method: FixedPointMethod::Direct,
        iterations: 0,
        residual,
    })
}

/// Repeated cycles until `|W_{n+1} - W_n|_inf < tol`.
///
/// With `damping < 1` the update is `W <- (1 - damping) W + damping T(W)`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_iterative(
    blocks: &PropagatorBlocks,
    eta: f64,
    c0: &ReferenceBathState,
    init: &BlockedSpdm,
    tol: f64,
    max_cycles: usize,
    damping: f64,
    hermiticity_tol: f64,
) -> Result<FixedPointResult, ResetMapError> {
    check_eta(eta)?;
    check_sizes(blocks.n_modes(), init.n_modes(), "initial state")?;
    check_sizes(blocks.n_modes(), c0.n_modes(), "reference state")?;
    let mut w = init.kept();
    let mut increment = f64::INFINITY;
    for cycle in 1..=max_cycles {
        let t = step_kept(&w, blocks, eta, c0);
        let next = if damping == 1.0 {
            t
        } else {
            let mix = |a: c64, b: c64| a * (1.0 - damping) + b * damping;
            KeptEntries {
                p: mix(w.p, t.p),
                x: w.x.iter().zip(&t.x).map(|(a, b)| mix(*a, *b)).collect(),
                y: w.y.iter().zip(&t.y).map(|(a, b)| mix(*a, *b)).collect(),
            }
        };
        increment = inf_norm_diff(&next.to_vec(), &w.to_vec());
        w = next;
        if increment < tol {
            let residual = inf_norm_diff(&w.to_vec(), &step_kept(&w, blocks, eta, c0).to_vec());
            let state = finish(w, c0, hermiticity_tol)?;
            let pre = HermitianMatrix::new(pre_reset_bath(&state, blocks, c0))?;
            let shift = occupation_shift(&state, blocks, c0);
            return Ok(FixedPointResult {
                state,
                pre_reset_bath: pre,
                occupation_shift: shift,
                rho_spectral: f64::NAN,
                method: FixedPointMethod::Iterative,
                iterations: cycle,
                residual,
            });
        }
    }
    Err(ResetMapError::NoConvergence {
        cycles: max_cycles,
        increment,
    })
}

/// Direct solve when contracting, damped iteration from the thermal product
/// state when marginal, error when divergent.
pub fn solve_fixed_point(
    blocks: &PropagatorBlocks,
    eta: f64,
    c0: &ReferenceBathState,
    sys: &SystemSpec,
    opts: &SolverOptions,
) -> Result<FixedPointResult, ResetMapError> {
    let map = assemble_affine(blocks, eta, c0)?;
    let rho = map.spectral_radius(&opts.radius)?;
    if rho > 1.0 + opts.divergence_margin {
        return Err(ResetMapError::Divergent(rho));
    }
    let iterate = || {
        let init = BlockedSpdm::thermal(sys, c0);
        fixed_point_iterative(
            blocks,
            eta,
            c0,
            &init,
            opts.iter_tol,
            opts.max_cycles,
            opts.damping,
            opts.hermiticity_tol,
        )
        .map(|mut fp| {
            fp.rho_spectral = rho;
            fp
        })
    };
    if rho >= 1.0 - opts.marginal_margin {
        return iterate();
    }
    match fixed_point_direct_with_radius(&map, blocks, c0, rho, opts) {
        Err(ResetMapError::Linalg(LinalgError::Singular { .. })) => iterate(),
        other => other,
    }
}

/// Bath block just before the reset: `w P w^H + X y w^H + w x X^H + X C0 X^H`.
pub fn pre_reset_bath(
    state: &BlockedSpdm,
    blocks: &PropagatorBlocks,
    c0: &ReferenceBathState,
) -> ComplexMatrix {
    let n = blocks.n_modes();
    let (w, xm) = (&blocks.w, &blocks.x);
    let xy = matvec(xm, &state.y);
    // (x X^H)_l = conj((X conj(x))_l)
    let x_conj: Vec<c64> = state.x.iter().map(|z| z.conj()).collect();
    let xx = matvec(xm, &x_conj);
    let scaled = Mat::from_fn(n, n, |i, j| xm[(i, j)] * c0.occupations[j]);
    let mut c = &scaled * xm.adjoint();
    for l in 0..n {
        for k in 0..n {
            c[(k, l)] += w[k] * w[l].conj() * state.p + xy[k] * w[l].conj() + w[k] * xx[l].conj();
        }
    }
    c
}

/// `diag(C_pre - C0)` without forming `C_pre`.
///
/// Uses `sum_j |X_kj|^2 = 1 - |w_k|^2` so that no O(1) occupations cancel:
/// `|w_k|^2 (P - n_k) + 2 Re[conj(w_k) (X y)_k] + sum_j |X_kj|^2 (n_j - n_k)`.
pub fn occupation_shift(state: &BlockedSpdm, blocks: &PropagatorBlocks, c0: &ReferenceBathState) -> Vec<f64> {
    let n = blocks.n_modes();
    let (w, xm) = (&blocks.w, &blocks.x);
    let xy = matvec(xm, &state.y);
    let occ = &c0.occupations;
    (0..n)
        .map(|k| {
            let spread: f64 = (0..n).map(|j| xm[(k, j)].norm_sqr() * (occ[j] - occ[k])).sum();
            w[k].norm_sqr() * (state.p - occ[k]) + 2.0 * (w[k].conj() * xy[k]).re + spread
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bath_basis, reference_state, BathSpec};

    fn setup(n: usize, tc: f64, tau: f64) -> (PropagatorBlocks, ReferenceBathState, SystemSpec) {
        let basis = bath_basis(&BathSpec::new(n, 1.0, tc).unwrap()).unwrap();
        let sys = SystemSpec::default();
        let c0 = reference_state(&basis, &sys);
        (propagator(&basis, &sys, tau).unwrap(), c0, sys)
    }

    #[test]
    fn zero_time_blocks() {
        let (b, _, _) = setup(6, 0.2, 0.0);
        assert!((b.u - c64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(b.v.iter().chain(&b.w).all(|z| z.norm() < 1e-14));
        for i in 0..6 {
            for j in 0..6 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((b.x[(i, j)] - c64::new(id, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn decoupled_blocks() {
        let tau = 0.3;
        let basis = bath_basis(&BathSpec::new(5, 1.0, 0.0).unwrap()).unwrap();
        let sys = SystemSpec::default();
        let b = propagator(&basis, &sys, tau).unwrap();
        assert!((b.u - c64::cis(-sys.omega0 * tau)).norm() < 1e-14);
        assert!(b.v.iter().chain(&b.w).all(|z| z.norm() < 1e-14));
        for k in 0..5 {
            assert!((b.x[(k, k)] - c64::cis(-basis.frequencies[k] * tau)).norm() < 1e-13);
        }
    }

    #[test]
    fn first_column_norm() {
        let (b, _, _) = setup(40, 0.2, 0.2);
        let norm = b.u.norm_sqr() + b.w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_unitary() {
        let m = Mat::from_fn(3, 3, |i, j| c64::new(if i == j { 2.0 } else { 0.0 }, 0.0));
        assert!(matches!(split_propagator(&m), Err(ResetMapError::NotUnitary(_))));
    }

    #[test]
    fn eta_domain() {
        let (b, c0, sys) = setup(4, 0.2, 0.2);
        let s = BlockedSpdm::thermal(&sys, &c0);
        assert!(matches!(one_cycle(&s, &b, 1.5, &c0), Err(ResetMapError::EtaOutOfRange(_))));
        assert!(matches!(one_cycle(&s, &b, -0.1, &c0), Err(ResetMapError::EtaOutOfRange(_))));
    }

    #[test]
    fn erasure_endpoint_zeroes_coherences() {
        let (b, c0, _) = setup(8, 0.2, 0.2);
        let mut s = BlockedSpdm::product(0.3, &c0);
        s.x[2] = c64::new(0.05, 0.02);
        s.y[2] = s.x[2].conj();
        let next = one_cycle(&s, &b, 0.0, &c0).unwrap();
        assert!(next.x.iter().chain(&next.y).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn decoupled_cycle_only_rotates() {
        let (b, c0, _) = setup(6, 0.0, 0.4);
        let mut s = BlockedSpdm::product(0.3, &c0);
        for k in 0..6 {
            s.x[k] = c64::new(0.01 * k as f64, -0.02);
            s.y[k] = s.x[k].conj();
        }
        let next = one_cycle(&s, &b, 0.7, &c0).unwrap();
        assert!((next.p - 0.3).abs() < 1e-14);
        for k in 0..6 {
            assert!((next.x[k].norm() - 0.7 * s.x[k].norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_time_affine_map() {
        let (b, c0, _) = setup(5, 0.2, 0.0);
        let map = assemble_affine(&b, 0.4, &c0).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                let d = if i != j { 0.0 } else if i == 0 { 1.0 } else { 0.4 };
                assert!((map.a[(i, j)] - c64::new(d, 0.0)).norm() < 1e-14);
            }
            assert!(map.b[i].norm() < 1e-14);
        }
    }

    #[test]
    fn erasure_affine_rows_vanish() {
        let (b, c0, _) = setup(5, 0.2, 0.3);
        let map = assemble_affine(&b, 0.0, &c0).unwrap();
        for i in 1..11 {
            assert!((0..11).all(|j| map.a[(i, j)].norm() == 0.0));
            assert_eq!(map.b[i].norm(), 0.0);
        }
    }

    #[test]
    fn decoupled_map_is_marginal() {
        let (b, c0, _) = setup(6, 0.0, 0.2);
        let map = assemble_affine(&b, 0.5, &c0).unwrap();
        let err = fixed_point_direct(&map, &b, &c0, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, ResetMapError::Marginal { .. }), "{err}");
    }

    #[test]
    fn erasure_fixed_point_closed_form() {
        let (b, c0, _) = setup(20, 0.2, 0.2);
        let map = assemble_affine(&b, 0.0, &c0).unwrap();
        let fp = fixed_point_direct(&map, &b, &c0, &SolverOptions::default()).unwrap();
        let vcv: f64 = b.v.iter().zip(&c0.occupations).map(|(v, n)| v.norm_sqr() * n).sum();
        let expected = vcv / (1.0 - b.u.norm_sqr());
        assert!((fp.state.p - expected).abs() < 1e-12);
        assert!(fp.state.x.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn iterative_from_fixed_point_takes_one_cycle() {
        let (b, c0, _) = setup(10, 0.2, 0.2);
        let map = assemble_affine(&b, 0.5, &c0).unwrap();
        let fp = fixed_point_direct(&map, &b, &c0, &SolverOptions::default()).unwrap();
        let it = fixed_point_iterative(&b, 0.5, &c0, &fp.state, 1e-12, 10, 1.0, 1e-9).unwrap();
        assert_eq!(it.iterations, 1);
    }

    #[test]
    fn iterative_reports_non_convergence() {
        let (b, c0, sys) = setup(10, 0.2, 0.2);
        let init = BlockedSpdm::thermal(&sys, &c0);
        let err = fixed_point_iterative(&b, 0.5, &c0, &init, 1e-14, 3, 1.0, 1e-9).unwrap_err();
        assert!(matches!(err, ResetMapError::NoConvergence { cycles: 3, .. }));
    }

    #[test]
    fn driver_falls_back_on_decoupled_map() {
        let (b, c0, sys) = setup(6, 0.0, 0.2);
        let fp = solve_fixed_point(&b, 0.5, &c0, &sys, &SolverOptions::default()).unwrap();
        assert_eq!(fp.method, FixedPointMethod::Iterative);
        assert!((fp.state.p - fermi(sys.omega0, sys.beta, sys.mu)).abs() < 1e-15);
    }

    #[test]
    fn decoupled_bath_unchanged() {
        let (b, c0, sys) = setup(6, 0.0, 0.7);
        let c = pre_reset_bath(&BlockedSpdm::thermal(&sys, &c0), &b, &c0);
        for i in 0..6 {
            for j in 0..6 {
                let d = if i == j { c0.occupations[i] } else { 0.0 };
                assert!((c[(i, j)] - c64::new(d, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn occupation_shift_matches_block_diagonal() {
        let (b, c0, sys) = setup(15, 0.3, 0.4);
        let mut state = BlockedSpdm::thermal(&sys, &c0);
        for k in 0..15 {
            state.x[k] = c64::new(0.01 * k as f64, -0.02) / 15.0;
            state.y[k] = state.x[k].conj();
        }
        let c = pre_reset_bath(&state, &b, &c0);
        let shift = occupation_shift(&state, &b, &c0);
        for k in 0..15 {
            assert!((c[(k, k)].re - c0.occupations[k] - shift[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn real_form_spectrum_matches_complex() {
        let (b, c0, _) = setup(12, 0.2, 0.3);
        let map = assemble_affine(&b, 0.6, &c0).unwrap();
        let opts = RadiusOptions::default();
        let complex = linalg::spectral_radius(&map.a, &opts).unwrap();
        let real = map.spectral_radius(&opts).unwrap();
        assert!((complex - real).abs() < 1e-12, "{complex} vs {real}");
    }
}
