//! Single level coupled to a finite open tight-binding chain.
//!
//! Site 0 is the system level, sites `1..=n_sites` the chain. Everything
//! downstream works in the chain eigenbasis, where the bath Hamiltonian is
//! diagonal and the thermal reference state is `diag(n_k)`.

use faer::Mat;
use thiserror::Error;

use crate::linalg::{c64, eig_hermitian, ComplexMatrix, HermitianMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid bath: {0}")]
    InvalidBath(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathSpec {
    pub n_sites: usize,
    /// Nearest-neighbour hopping `J > 0`.
    pub hopping: f64,
    /// Level-to-first-site coupling `t_c >= 0`.
    pub coupling: f64,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            n_sites: 400,
            hopping: 1.0,
            coupling: 0.2,
        }
    }
}

impl BathSpec {
    pub fn new(n_sites: usize, hopping: f64, coupling: f64) -> Result<Self, ModelError> {
        let spec = Self {
            n_sites,
            hopping,
            coupling,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_sites == 0 {
            return Err(ModelError::InvalidBath("n_sites must be at least 1".into()));
        }
        if !(self.hopping > 0.0 && self.hopping.is_finite()) {
            return Err(ModelError::InvalidBath(format!(
                "hopping must be positive, got {}",
                self.hopping
            )));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(ModelError::InvalidBath(format!(
                "coupling must be non-negative, got {}",
                self.coupling
            )));
        }
        Ok(())
    }

    pub fn with_sites(self, n_sites: usize) -> Self {
        Self { n_sites, ..self }
    }

    pub fn band_edge(&self) -> f64 {
        2.0 * self.hopping
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemSpec {
    pub omega0: f64,
    pub beta: f64,
    pub mu: f64,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            omega0: 0.8,
            beta: 3.0,
            mu: 0.0,
        }
    }
}

impl SystemSpec {
    pub fn new(omega0: f64, beta: f64, mu: f64) -> Result<Self, ModelError> {
        let spec = Self { omega0, beta, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ModelError::InvalidSystem(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !self.omega0.is_finite() || !self.mu.is_finite() {
            return Err(ModelError::InvalidSystem("omega0 and mu must be finite".into()));
        }
        Ok(())
    }
}

/// Fermi function `1 / (exp(beta (omega - mu)) + 1)`, overflow-safe in both tails.
pub fn fermi(omega: f64, beta: f64, mu: f64) -> f64 {
    let z = beta * (omega - mu);
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (z.exp() + 1.0)
    }
}

/// Chain eigenmodes, ascending in frequency.
#[derive(Clone, Debug)]
pub struct BathBasis {
    pub frequencies: Vec<f64>,
    /// `g_k = t_c * phi_1(k)`; real with the sign convention below, stored complex.
    pub couplings: Vec<c64>,
    /// Columns are eigenvectors in the site basis, first component `>= 0`.
    pub transform: ComplexMatrix,
    pub spec: BathSpec,
}

impl BathBasis {
    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn coupling_weights(&self) -> Vec<f64> {
        self.couplings.iter().map(|g| g.norm_sqr()).collect()
    }
}

/// Thermal bath state, diagonal in the eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceBathState {
    pub occupations: Vec<f64>,
}

impl ReferenceBathState {
    pub fn n_modes(&self) -> usize {
        self.occupations.len()
    }

    pub fn trace(&self) -> f64 {
        self.occupations.iter().sum()
    }

    pub fn to_matrix(&self) -> HermitianMatrix {
        HermitianMatrix::from_diagonal(&self.occupations)
    }
}

fn chain_block(bath: &BathSpec) -> HermitianMatrix {
    let j = bath.hopping;
    HermitianMatrix::from_real_fn(bath.n_sites, |a, b| if a == b + 1 { -j } else { 0.0 })
}

/// Site-basis Hamiltonian of dimension `1 + n_sites`.
pub fn build_hamiltonian(bath: &BathSpec, sys: &SystemSpec) -> Result<HermitianMatrix, ModelError> {
    bath.validate()?;
    sys.validate()?;
    let (w0, tc, j) = (sys.omega0, bath.coupling, bath.hopping);
    Ok(HermitianMatrix::from_real_fn(1 + bath.n_sites, |a, b| {
        match (a, b) {
            (0, 0) => w0,
            (1, 0) => tc,
            (a, b) if b >= 1 && a == b + 1 => -j,
            _ => 0.0,
        }
    }))
}

pub fn bath_basis(bath: &BathSpec) -> Result<BathBasis, ModelError> {
    bath.validate()?;
    let evd = eig_hermitian(&chain_block(bath))?;
    let n = bath.n_sites;
    let mut transform = evd.eigenvectors;
    for k in 0..n {
        // The chain block is real, so each eigenvector is real up to a phase;
        // rotate it so the first component is real and non-negative.
        let first = transform[(0, k)];
        let phase = if first.norm() > 0.0 {
            first.conj() / first.norm()
        } else {
            let pivot = (0..n)
                .map(|i| transform[(i, k)])
                .fold(c64::new(0.0, 0.0), |best, z| if z.norm() > best.norm() { z } else { best });
            pivot.conj() / pivot.norm()
        };
        for i in 0..n {
            transform[(i, k)] *= phase;
        }
    }
    let couplings = (0..n)
        .map(|k| c64::new(bath.coupling * transform[(0, k)].re, 0.0))
        .collect();
    Ok(BathBasis {
        frequencies: evd.eigenvalues,
        couplings,
        transform,
        spec: *bath,
    })
}

pub fn reference_state(basis: &BathBasis, sys: &SystemSpec) -> ReferenceBathState {
    ReferenceBathState {
        occupations: basis
            .frequencies
            .iter()
            .map(|&w| fermi(w, sys.beta, sys.mu))
            .collect(),
    }
}

/// Hamiltonian rotated so the bath block is `diag(omega_k)`; row/column 0 carry `g_k`.
pub fn eigenbasis_hamiltonian(basis: &BathBasis, sys: &SystemSpec) -> HermitianMatrix {
    let n = basis.n_modes();
    let m = Mat::from_fn(1 + n, 1 + n, |a, b| match (a, b) {
        (0, 0) => c64::new(sys.omega0, 0.0),
        (0, k) => basis.couplings[k - 1].conj(),
        (k, 0) => basis.couplings[k - 1],
        (a, b) if a == b => c64::new(basis.frequencies[a - 1], 0.0),
        _ => c64::new(0.0, 0.0),
    });
    HermitianMatrix::new(m).expect("eigenbasis Hamiltonian is Hermitian by construction")
}

/// Semicircular spectral density of the semi-infinite chain.
pub fn spectral_density(omega: f64, bath: &BathSpec) -> f64 {
    let j = bath.hopping;
    if omega.abs() >= 2.0 * j {
        return 0.0;
    }
    bath.coupling.powi(2) / (2.0 * std::f64::consts::PI * j * j) * (4.0 * j * j - omega * omega).sqrt()
}

/// Integral of [`spectral_density`] from `-2J` to `omega`.
pub fn spectral_density_cdf(omega: f64, bath: &BathSpec) -> f64 {
    let j = bath.hopping;
    let total = bath.coupling.powi(2);
    if omega <= -2.0 * j {
        return 0.0;
    }
    if omega >= 2.0 * j {
        return total;
    }
    let s = omega / (2.0 * j);
    total * (0.5 + (s * (1.0 - s * s).sqrt() + s.asin()) / std::f64::consts::PI)
}

/// Plain histogram density: `sum |g_k|^2` over modes in each bin, divided by bin width.
pub fn histogram_density(basis: &BathBasis, edges: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; edges.len().saturating_sub(1)];
    for (w, g) in basis.frequencies.iter().zip(&basis.couplings) {
        if let Some(b) = edges.windows(2).position(|e| *w >= e[0] && *w < e[1]) {
            out[b] += g.norm_sqr();
        }
    }
    for (b, v) in out.iter_mut().enumerate() {
        *v /= edges[b + 1] - edges[b];
    }
    out
}

/// Bin-averaged mode density with each mode's weight spread uniformly over its
/// frequency cell (midpoints to its neighbours, band edges at the ends).
///
/// This is the derivative of a piecewise-linear empirical cumulative weight,
/// which removes the mode-counting granularity of [`histogram_density`].
pub fn cell_spread_density(basis: &BathBasis, edges: &[f64]) -> Vec<f64> {
    let w = &basis.frequencies;
    let n = w.len();
    let edge = basis.spec.band_edge();
    let cells: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let lo = if k == 0 { -edge } else { 0.5 * (w[k - 1] + w[k]) };
            let hi = if k + 1 == n { edge } else { 0.5 * (w[k] + w[k + 1]) };
            (lo, hi)
        })
        .collect();
    let cumulative = |x: f64| -> f64 {
        cells
            .iter()
            .zip(&basis.couplings)
            .map(|(&(lo, hi), g)| {
                let frac = if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else if x >= hi {
                    1.0
                } else {
                    0.0
                };
                frac * g.norm_sqr()
            })
            .sum()
    };
    edges
        .windows(2)
        .map(|e| (cumulative(e[1]) - cumulative(e[0])) / (e[1] - e[0]))
        .collect()
}
