//! Leading small-`tau` closed forms for the fixed-point coherences and heat.
//!
//! The system occupation `p_fp` is taken from the exact solver, so these
//! isolate the error of the coherence formulas alone.

use thiserror::Error;

use crate::linalg::c64;
use crate::model::{fermi, spectral_density, BathBasis, BathSpec, ReferenceBathState, SystemSpec};
use crate::resetmap::FixedPointResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("guide formulas need 0 <= eta < 1, got {0}")]
    EtaOutOfRange(f64),
    #[error("guide formulas need tau > 0, got {0}")]
    InvalidTau(f64),
    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeIndex { index: usize, n_modes: usize },
    #[error("inconsistent mode data: {0}")]
    Dimension(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuideParams {
    pub tau: f64,
    pub eta: f64,
    pub omega0: f64,
    pub beta: f64,
    pub mu: f64,
    pub p_fp: f64,
    pub frequencies: Vec<f64>,
    pub couplings: Vec<c64>,
    pub occupations: Vec<f64>,
}

impl GuideParams {
    pub fn new(
        fp: &FixedPointResult,
        basis: &BathBasis,
        c0: &ReferenceBathState,
        sys: &SystemSpec,
        tau: f64,
        eta: f64,
    ) -> Result<Self, AsymptoticsError> {
        let params = Self {
            tau,
            eta,
            omega0: sys.omega0,
            beta: sys.beta,
            mu: sys.mu,
            p_fp: fp.state.p,
            frequencies: basis.frequencies.clone(),
            couplings: basis.couplings.clone(),
            occupations: c0.occupations.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), AsymptoticsError> {
        if !(0.0..1.0).contains(&self.eta) {
            return Err(AsymptoticsError::EtaOutOfRange(self.eta));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(AsymptoticsError::InvalidTau(self.tau));
        }
        let n = self.frequencies.len();
        if self.couplings.len() != n || self.occupations.len() != n {
            return Err(AsymptoticsError::Dimension(format!(
                "{} frequencies, {} couplings, {} occupations",
                n,
                self.couplings.len(),
                self.occupations.len()
            )));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    fn mode(&self, k: usize) -> Result<(f64, c64, f64), AsymptoticsError> {
        self.validate()?;
        if k >= self.n_modes() {
            return Err(AsymptoticsError::ModeIndex {
                index: k,
                n_modes: self.n_modes(),
            });
        }
        Ok((self.frequencies[k], self.couplings[k], self.occupations[k]))
    }

    // (1 - eta)^2 + eta^2 (omega0 - omega)^2 tau^2
    fn denominator(&self, omega: f64) -> f64 {
        let detuning = self.eta * (self.omega0 - omega) * self.tau;
        (1.0 - self.eta).powi(2) + detuning * detuning
    }
}

/// `i eta g_k (P - n_k) tau / [(1 - eta) + i eta (omega0 - omega_k) tau]`.
pub fn guide_coherence(params: &GuideParams, k: usize) -> Result<c64, AsymptoticsError> {
    let (w, g, n) = params.mode(k)?;
    let (eta, tau) = (params.eta, params.tau);
    let num = c64::new(0.0, eta * tau * (params.p_fp - n)) * g;
    let den = c64::new(1.0 - eta, eta * (params.omega0 - w) * tau);
    Ok(num / den)
}

pub fn guide_weight(params: &GuideParams, k: usize) -> Result<f64, AsymptoticsError> {
    let (w, g, n) = params.mode(k)?;
    let (eta, tau) = (params.eta, params.tau);
    Ok((eta * tau * (params.p_fp - n)).powi(2) * g.norm_sqr() / params.denominator(w))
}

/// Continuum guide `eta^2 tau^2 J(omega) [P - n_F(omega)]^2 / denominator`.
pub fn guide_spectrum(omega: f64, params: &GuideParams, bath: &BathSpec) -> Result<f64, AsymptoticsError> {
    params.validate()?;
    let density = spectral_density(omega, bath);
    if density == 0.0 {
        return Ok(0.0);
    }
    let mismatch = params.p_fp - fermi(omega, params.beta, params.mu);
    Ok((params.eta * params.tau * mismatch).powi(2) * density / params.denominator(omega))
}

/// `eta^2 tau^2 / (1 - eta)^2 * sum_k |g_k|^2 (P - n_k)^2`.
pub fn guide_total_coherence(params: &GuideParams) -> Result<f64, AsymptoticsError> {
    params.validate()?;
    let (eta, tau) = (params.eta, params.tau);
    let sum: f64 = params
        .couplings
        .iter()
        .zip(&params.occupations)
        .map(|(g, n)| g.norm_sqr() * (params.p_fp - n).powi(2))
        .sum();
    Ok((eta * tau / (1.0 - eta)).powi(2) * sum)
}

/// Leading coherence-induced heat per reset.
pub fn guide_coherence_heat(params: &GuideParams) -> Result<f64, AsymptoticsError> {
    params.validate()?;
    let (eta, tau) = (params.eta, params.tau);
    let sum: f64 = (0..params.n_modes())
        .map(|k| {
            let w = params.frequencies[k];
            let g2 = params.couplings[k].norm_sqr();
            w * 2.0 * eta * (1.0 - eta) * g2 * (params.p_fp - params.occupations[k])
                / params.denominator(w)
        })
        .sum();
    Ok(tau * tau * sum)
}
