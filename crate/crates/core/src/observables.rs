//! Fixed-point observables: retained coherence, reset heat, Gaussian entropies.
//!
//! Entropies use `k_B = 1`. Positive heat is energy dumped into the
//! super-environment by the reset.

use thiserror::Error;

use crate::linalg::{self, c64, ComplexMatrix, HermitianMatrix, LinalgError, SpectralDomain, SPECTRUM_EPS};
use crate::model::{BathBasis, ReferenceBathState, SystemSpec};
use crate::resetmap::FixedPointResult;

/// Below this `|j_q|` the efficiency `c_se / j_q` is reported as `+inf`.
pub const JQ_FLOOR: f64 = 1e-12;
/// Largest tolerated imaginary part of a bath-energy trace.
pub const IMAGINARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservablesError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("trace has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceSpectrum {
    pub frequencies: Vec<f64>,
    /// `|x_k|^2` per bath mode.
    pub weights: Vec<f64>,
}

/// One fixed point, all observables. Column order matches the sweep CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableRecord {
    pub tau: f64,
    pub eta: f64,
    pub mu: f64,
    pub omega0: f64,
    pub n_sites: usize,
    pub p_star: f64,
    pub c_se: f64,
    pub q_sup: f64,
    pub j_q: f64,
    pub sigma_reset: f64,
    pub sigma_rate: f64,
    pub r_eff: f64,
    pub dn_e: f64,
    pub j_gc: f64,
    pub rho_spectral: f64,
    pub converged: bool,
}

impl ObservableRecord {
    /// Row for a point whose fixed point could not be obtained.
    pub fn failed(tau: f64, eta: f64, sys: &SystemSpec, n_sites: usize, rho_spectral: f64) -> Self {
        Self {
            tau,
            eta,
            mu: sys.mu,
            omega0: sys.omega0,
            n_sites,
            p_star: f64::NAN,
            c_se: f64::NAN,
            q_sup: f64::NAN,
            j_q: f64::NAN,
            sigma_reset: f64::NAN,
            sigma_rate: f64::NAN,
            r_eff: f64::NAN,
            dn_e: f64::NAN,
            j_gc: f64::NAN,
            rho_spectral,
            converged: false,
        }
    }
}

pub fn coherence_spectrum(fp: &FixedPointResult, basis: &BathBasis) -> CoherenceSpectrum {
    CoherenceSpectrum {
        frequencies: basis.frequencies.clone(),
        weights: fp.state.x.iter().map(|z| z.norm_sqr()).collect(),
    }
}

pub fn total_coherence(spec: &CoherenceSpectrum) -> f64 {
    spec.weights.iter().sum()
}

fn check_dim(c: usize, c0: &ReferenceBathState) -> Result<(), ObservablesError> {
    if c == c0.n_modes() {
        Ok(())
    } else {
        Err(ObservablesError::Dimension(format!(
            "matrix has dimension {c}, reference state has {} modes",
            c0.n_modes()
        )))
    }
}

/// `sum_k omega_k (c_pre[k, k] - n_k)`.
pub fn heat_per_reset(
    c_pre: &ComplexMatrix,
    c0: &ReferenceBathState,
    frequencies: &[f64],
) -> Result<f64, ObservablesError> {
    check_dim(c_pre.nrows(), c0)?;
    if frequencies.len() != c0.n_modes() {
        return Err(ObservablesError::Dimension("frequencies and occupations differ in length".into()));
    }
    let mut acc = c64::new(0.0, 0.0);
    for (k, (&w, &n)) in frequencies.iter().zip(&c0.occupations).enumerate() {
        acc += (c_pre[(k, k)] - n) * w;
    }
    if acc.im.abs() > IMAGINARY_TOL {
        return Err(ObservablesError::ImaginaryResidue(acc.im));
    }
    Ok(acc.re)
}

/// `x ln x + (1 - x) ln(1 - x)` with `0 ln 0 = 0`.
pub fn neg_binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { p * p.ln() } else { 0.0 };
    term(x) + term(1.0 - x)
}

pub fn gaussian_entropy(c: &HermitianMatrix) -> Result<f64, ObservablesError> {
    Ok(-linalg::spectral_trace(c, neg_binary_entropy, SpectralDomain::UnitInterval)?)
}

fn reference_entropy(c0: &ReferenceBathState) -> f64 {
    -c0.occupations.iter().map(|&n| neg_binary_entropy(n)).sum::<f64>()
}

// -sum_k [C_kk ln n_k + (1 - C_kk) ln(1 - n_k)], the cross term of D(C || C0).
fn cross_entropy(c: &HermitianMatrix, c0: &ReferenceBathState) -> f64 {
    c0.occupations
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let n = n.clamp(SPECTRUM_EPS, 1.0 - SPECTRUM_EPS);
            let ckk = c.get(k, k).re;
            -(ckk * n.ln() + (1.0 - ckk) * (1.0 - n).ln())
        })
        .sum()
}

/// `D(C || C0) = Tr[C (ln C - ln C0) + (1 - C)(ln(1 - C) - ln(1 - C0))]` for diagonal `C0`.
pub fn relative_entropy(c: &HermitianMatrix, c0: &ReferenceBathState) -> Result<f64, ObservablesError> {
    check_dim(c.dim(), c0)?;
    let neg_s = linalg::spectral_trace(c, neg_binary_entropy, SpectralDomain::UnitInterval)?;
    Ok(neg_s + cross_entropy(c, c0))
}

/// `|D - beta (Q - mu dN) + S(C) - S(C0)|`, which vanishes for a thermal `C0`.
pub fn entropy_decomposition_check(
    c_pre: &HermitianMatrix,
    c0: &ReferenceBathState,
    frequencies: &[f64],
    sys: &SystemSpec,
) -> Result<f64, ObservablesError> {
    let d = relative_entropy(c_pre, c0)?;
    let q = heat_per_reset(c_pre.as_mat(), c0, frequencies)?;
    let dn = particle_transfer(c_pre.as_mat(), c0);
    let s = gaussian_entropy(c_pre)?;
    Ok((d - sys.beta * (q - sys.mu * dn) + s - reference_entropy(c0)).abs())
}

/// `Tr(C_pre - C0)`.
pub fn particle_transfer(c_pre: &ComplexMatrix, c0: &ReferenceBathState) -> f64 {
    c0.occupations
        .iter()
        .enumerate()
        .map(|(k, &n)| c_pre[(k, k)].re - n)
        .sum()
}

pub fn efficiency(c_se: f64, j_q: f64) -> f64 {
    if j_q.abs() < JQ_FLOOR {
        f64::INFINITY
    } else {
        c_se / j_q
    }
}

/// All observables at a fixed point. The row is marked not converged, with
/// NaN entropies, when the pre-reset bath block leaves `[0, 1]`.
pub fn observables_row(
    fp: &FixedPointResult,
    basis: &BathBasis,
    c0: &ReferenceBathState,
    sys: &SystemSpec,
    tau: f64,
    eta: f64,
) -> Result<ObservableRecord, ObservablesError> {
    let c_pre = &fp.pre_reset_bath;
    let c_se = fp.state.coherence_norm_sqr();
    check_dim(fp.occupation_shift.len(), c0)?;
    let q_sup: f64 = fp.occupation_shift.iter().zip(&basis.frequencies).map(|(d, w)| d * w).sum();
    // The coherence-keeping reset is not positivity preserving, so near
    // eta = 1 the pre-reset block can leave [0, 1]; such rows are kept but
    // flagged, with undefined entropies.
    let sigma_reset = match relative_entropy(c_pre, c0) {
        Ok(d) => d,
        Err(ObservablesError::Linalg(LinalgError::OutsideDomain { .. })) => f64::NAN,
        Err(e) => return Err(e),
    };
    let dn_e: f64 = fp.occupation_shift.iter().sum();
    let j_q = q_sup / tau;
    Ok(ObservableRecord {
        tau,
        eta,
        mu: sys.mu,
        omega0: sys.omega0,
        n_sites: basis.n_modes(),
        p_star: fp.state.p,
        c_se,
        q_sup,
        j_q,
        sigma_reset,
        sigma_rate: sigma_reset / tau,
        r_eff: efficiency(c_se, j_q),
        dn_e,
        j_gc: (q_sup - sys.mu * dn_e) / tau,
        rho_spectral: fp.rho_spectral,
        converged: !sigma_reset.is_nan(),
    })
}
