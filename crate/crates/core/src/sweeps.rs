//! Parameter grids, operating points and truncation checks.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{c64, ComplexMatrix};
use crate::model::{bath_basis, reference_state, BathBasis, BathSpec, ModelError, ReferenceBathState, SystemSpec};
use crate::observables::{observables_row, ObservableRecord};
use crate::resetmap::{propagator, solve_fixed_point, FixedPointResult, PropagatorBlocks, ResetMapError, SolverOptions};

/// Default threshold of [`boundary_weight`] above which a row is flagged.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-2;
/// A convergence study passes when the last relative change is below this.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no records")]
    Empty,
    #[error("records mix parameters: {0}")]
    MixedParameters(String),
    #[error("operating points need at least {needed} eta values, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ResetMap(#[from] ResetMapError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub tau_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub omega0_values: Vec<f64>,
    pub bath: BathSpec,
    pub beta: f64,
}

fn check_axis(name: &str, values: &[f64]) -> Result<(), SweepError> {
    if values.is_empty() {
        return Err(SweepError::InvalidGrid(format!("{name} grid is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SweepError::InvalidGrid(format!("{name} grid has non-finite values")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SweepError::InvalidGrid(format!("{name} grid is not strictly increasing")));
    }
    Ok(())
}

impl SweepGrid {
    pub fn validate(&self) -> Result<(), SweepError> {
        check_axis("tau", &self.tau_values)?;
        check_axis("eta", &self.eta_values)?;
        check_axis("mu", &self.mu_values)?;
        check_axis("omega0", &self.omega0_values)?;
        if self.tau_values[0] <= 0.0 {
            return Err(SweepError::InvalidGrid("tau values must be positive".into()));
        }
        if self.eta_values[0] < 0.0 || *self.eta_values.last().unwrap() > 1.0 {
            return Err(SweepError::InvalidGrid("eta values must lie in [0, 1]".into()));
        }
        self.bath.validate()?;
        SystemSpec::new(0.0, self.beta, 0.0)?;
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.tau_values.len() * self.eta_values.len() * self.mu_values.len() * self.omega0_values.len()
    }

    /// Single-point grid.
    pub fn point(bath: BathSpec, sys: SystemSpec, tau: f64, eta: f64) -> Self {
        Self {
            tau_values: vec![tau],
            eta_values: vec![eta],
            mu_values: vec![sys.mu],
            omega0_values: vec![sys.omega0],
            bath,
            beta: sys.beta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    pub workers: usize,
    pub boundary_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            workers: 1,
            boundary_tol: DEFAULT_BOUNDARY_TOL,
        }
    }
}

/// Evenly spaced values including both ends.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// `k / n` for `k = 0..n`, plus `1.0` when requested.
pub fn dyadic_eta_grid(n: usize, include_one: bool) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
    if include_one {
        out.push(1.0);
    }
    out
}

fn default_grid(tau: Vec<f64>, eta: Vec<f64>, mu: Vec<f64>, n_sites: usize) -> SweepGrid {
    SweepGrid {
        tau_values: tau,
        eta_values: eta,
        mu_values: mu,
        omega0_values: vec![0.8, 3.0],
        bath: BathSpec::default().with_sites(n_sites),
        beta: SystemSpec::default().beta,
    }
}

/// RI and EC endpoints across the reset interval.
pub fn endpoint_grid() -> SweepGrid {
    default_grid(linspace(0.02, 1.0, 50), vec![0.0, 1.0], vec![0.0], 400)
}

/// Fixed `tau J = 0.2`, 64 eta values in `[0, 1)`.
pub fn linecut_grid() -> SweepGrid {
    default_grid(vec![0.2], dyadic_eta_grid(64, false), vec![0.0], 400)
}

/// 48 x 48 over `tau J in [0.02, 1]` and `eta in [0, 0.995]`.
pub fn heatmap_grid() -> SweepGrid {
    default_grid(linspace(0.02, 1.0, 48), linspace(0.0, 0.995, 48), vec![0.0], 200)
}

/// Four reset intervals, 96 eta values in `[0, 1)`.
pub fn pareto_grid() -> SweepGrid {
    default_grid(vec![0.08, 0.2, 0.5, 0.8], dyadic_eta_grid(96, false), vec![0.0], 400)
}

/// 61 chemical potentials in `[-3J, 3J]` at four retention values.
pub fn mu_sweep_grid() -> SweepGrid {
    default_grid(vec![0.2], vec![0.2, 0.5, 0.8, 0.95], linspace(-3.0, 3.0, 61), 200)
}

/// eta resolution 1/128 at four reset intervals.
pub fn operating_grid(include_eta_one: bool) -> SweepGrid {
    default_grid(
        vec![0.08, 0.2, 0.5, 0.8],
        dyadic_eta_grid(128, include_eta_one),
        vec![0.0],
        200,
    )
}

/// How strongly a fixed point reaches the far end of the chain.
///
/// Ratio of the largest site-basis amplitude over the last quarter of the
/// chain to the largest overall, for both the coherences `x` and the diagonal
/// of `C_pre - C0`. Chains shorter than four sites have no tail and give 0.
pub fn boundary_weight(fp: &FixedPointResult, basis: &BathBasis, c0: &ReferenceBathState) -> f64 {
    let n = basis.n_modes();
    let tail = (3 * n).div_ceil(4);
    if tail >= n {
        return 0.0;
    }
    let t = &basis.transform;
    let ratio = |v: &[f64]| {
        let all = v.iter().cloned().fold(0.0, f64::max);
        if all == 0.0 {
            0.0
        } else {
            v[tail..].iter().cloned().fold(0.0, f64::max) / all
        }
    };

    let x_site: Vec<f64> = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| t[(j, k)] * fp.state.x[k])
                .sum::<c64>()
                .norm()
        })
        .collect();

    let c = fp.pre_reset_bath.as_mat();
    let delta = ComplexMatrix::from_fn(n, n, |k, l| {
        if k == l {
            c[(k, l)] - c0.occupations[k]
        } else {
            c[(k, l)]
        }
    });
    // diag(T delta T^H) without the second product
    let half = &delta * t.adjoint();
    let d_site: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|k| t[(j, k)] * half[(k, j)]).sum::<c64>().norm())
        .collect();

    ratio(&x_site).max(ratio(&d_site))
}

/// Everything shared by the points of one `(tau, omega0)` group.
pub struct PointContext<'a> {
    pub basis: &'a BathBasis,
    pub blocks: &'a PropagatorBlocks,
    pub tau: f64,
    pub omega0: f64,
    pub beta: f64,
    pub opts: &'a SweepOptions,
}

impl PointContext<'_> {
    pub fn system(&self, mu: f64) -> SystemSpec {
        SystemSpec {
            omega0: self.omega0,
            beta: self.beta,
            mu,
        }
    }

    /// Fixed point and record; failures become flagged rows.
    pub fn solve(&self, eta: f64, mu: f64) -> (Option<FixedPointResult>, ObservableRecord) {
        let sys = self.system(mu);
        let c0 = reference_state(self.basis, &sys);
        let n = self.basis.n_modes();
        match solve_fixed_point(self.blocks, eta, &c0, &sys, &self.opts.solver) {
            Ok(fp) => match observables_row(&fp, self.basis, &c0, &sys, self.tau, eta) {
                Ok(mut rec) => {
                    rec.converged &= boundary_weight(&fp, self.basis, &c0) <= self.opts.boundary_tol;
                    (Some(fp), rec)
                }
                Err(_) => (None, ObservableRecord::failed(self.tau, eta, &sys, n, fp.rho_spectral)),
            },
            Err(e) => {
                let rho = match e {
                    ResetMapError::Marginal { rho, .. } | ResetMapError::Divergent(rho) => rho,
                    _ => f64::NAN,
                };
                (None, ObservableRecord::failed(self.tau, eta, &sys, n, rho))
            }
        }
    }

    pub fn evaluate(&self, eta: f64, mu: f64) -> ObservableRecord {
        self.solve(eta, mu).1
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, SweepError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))
}

/// One record per grid point, ordered by `omega0`, then `tau`, then `mu`, then `eta`.
///
/// Propagators are computed once per `(tau, omega0)`. A group whose
/// propagator cannot be built yields flagged rows.
pub fn run_sweep(grid: &SweepGrid, opts: &SweepOptions) -> Result<Vec<ObservableRecord>, SweepError> {
    grid.validate()?;
    let basis = bath_basis(&grid.bath)?;
    let pool = build_pool(opts.workers)?;

    let groups: Vec<(f64, f64)> = grid
        .omega0_values
        .iter()
        .flat_map(|&w0| grid.tau_values.iter().map(move |&tau| (w0, tau)))
        .collect();

    let records = pool.install(|| {
        let blocks: Vec<Option<PropagatorBlocks>> = groups
            .par_iter()
            .map(|&(omega0, tau)| {
                let sys = SystemSpec {
                    omega0,
                    beta: grid.beta,
                    mu: 0.0,
                };
                propagator(&basis, &sys, tau).ok()
            })
            .collect();

        let points: Vec<(usize, f64, f64)> = (0..groups.len())
            .flat_map(|g| {
                grid.mu_values
                    .iter()
                    .flat_map(move |&mu| grid.eta_values.iter().map(move |&eta| (g, mu, eta)))
            })
            .collect();

        points
            .par_iter()
            .map(|&(g, mu, eta)| {
                let (omega0, tau) = groups[g];
                match &blocks[g] {
                    Some(b) => PointContext {
                        basis: &basis,
                        blocks: b,
                        tau,
                        omega0,
                        beta: grid.beta,
                        opts,
                    }
                    .evaluate(eta, mu),
                    None => {
                        let sys = SystemSpec {
                            omega0,
                            beta: grid.beta,
                            mu,
                        };
                        ObservableRecord::failed(tau, eta, &sys, grid.bath.n_sites, f64::NAN)
                    }
                }
            })
            .collect()
    });
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoints {
    pub tau: f64,
    pub eta_max_jq: f64,
    pub jq_max: f64,
    pub eta_max_cse: f64,
    pub cse_max: f64,
    pub eta_max_r: f64,
    pub r_max: f64,
    /// Smallest eta spacing of the grid.
    pub grid_resolution: f64,
}

/// Minimum number of distinct eta values for [`operating_points`].
pub const MIN_OPERATING_POINTS: usize = 8;

fn same_slice(records: &[ObservableRecord]) -> Result<(), SweepError> {
    let first = records.first().ok_or(SweepError::Empty)?;
    for r in records {
        if r.tau != first.tau {
            return Err(SweepError::MixedParameters(format!("tau {} and {}", first.tau, r.tau)));
        }
        if r.omega0 != first.omega0 || r.mu != first.mu || r.n_sites != first.n_sites {
            return Err(SweepError::MixedParameters("omega0, mu or n_sites differ".into()));
        }
    }
    Ok(())
}

/// First maximizer in iteration order, skipping non-finite values.
fn argmax_first<'a>(
    items: impl Iterator<Item = &'a ObservableRecord>,
    value: impl Fn(&ObservableRecord) -> f64,
) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for r in items {
        let v = value(r);
        if !v.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((r.eta, v));
        }
    }
    best
}

/// Grid argmax of `j_q`, `c_se` and `r_eff` over eta; ties go to the smaller eta.
///
/// Infinite `r_eff` rows are skipped unless every row is infinite, in which
/// case the eta of largest `c_se` is reported with `r_max = inf`.
pub fn operating_points(records: &[ObservableRecord]) -> Result<OperatingPoints, SweepError> {
    same_slice(records)?;
    let mut sorted: Vec<&ObservableRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    sorted.dedup_by(|a, b| a.eta == b.eta);
    if sorted.len() < MIN_OPERATING_POINTS {
        return Err(SweepError::TooFewPoints {
            needed: MIN_OPERATING_POINTS,
            got: sorted.len(),
        });
    }
    let resolution = sorted
        .windows(2)
        .map(|w| w[1].eta - w[0].eta)
        .fold(f64::INFINITY, f64::min);

    let none = || SweepError::MixedParameters("no finite values".into());
    let (eta_jq, jq) = argmax_first(sorted.iter().copied(), |r| r.j_q).ok_or_else(none)?;
    let (eta_cse, cse) = argmax_first(sorted.iter().copied(), |r| r.c_se).ok_or_else(none)?;
    let (eta_r, r) = match argmax_first(sorted.iter().copied(), |r| r.r_eff) {
        Some(found) => found,
        None if sorted.iter().all(|r| r.r_eff == f64::INFINITY) => (eta_cse, f64::INFINITY),
        None => return Err(none()),
    };
    Ok(OperatingPoints {
        tau: sorted[0].tau,
        eta_max_jq: eta_jq,
        jq_max: jq,
        eta_max_cse: eta_cse,
        cse_max: cse,
        eta_max_r: eta_r,
        r_max: r,
        grid_resolution: resolution,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParetoPoint {
    pub eta: f64,
    pub c_se: f64,
    pub j_q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoCurve {
    pub tau: f64,
    pub points: Vec<ParetoPoint>,
}

/// `(c_se, j_q)` in ascending eta, unfiltered.
pub fn pareto_curve(records: &[ObservableRecord]) -> Result<ParetoCurve, SweepError> {
    if records.is_empty() {
        return Ok(ParetoCurve {
            tau: f64::NAN,
            points: Vec::new(),
        });
    }
    same_slice(records)?;
    let mut points: Vec<ParetoPoint> = records
        .iter()
        .map(|r| ParetoPoint {
            eta: r.eta,
            c_se: r.c_se,
            j_q: r.j_q,
        })
        .collect();
    points.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    Ok(ParetoCurve {
        tau: records[0].tau,
        points,
    })
}

/// One parameter point, independent of the bath size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub eta: f64,
    pub system: SystemSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub n_sites: Vec<usize>,
    pub records: Vec<ObservableRecord>,
    /// Max relative change of `(p_star, c_se, j_q, sigma_reset)` between successive sizes.
    pub rel_diffs: Vec<f64>,
    pub threshold: f64,
    pub passed: bool,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn record_rel_diff(a: &ObservableRecord, b: &ObservableRecord) -> f64 {
    [
        rel_diff(a.p_star, b.p_star),
        rel_diff(a.c_se, b.c_se),
        rel_diff(a.j_q, b.j_q),
        rel_diff(a.sigma_reset, b.sigma_reset),
    ]
    .into_iter()
    .fold(0.0, |m, d| if d.is_nan() { f64::NAN } else { m.max(d) })
}

/// Evaluates the point at `N_b, 2 N_b, ...` (`doublings` times).
///
/// Passes when the last relative change is below [`CONVERGENCE_THRESHOLD`]
/// and every size produced a fixed point.
pub fn convergence_study(
    base: &BathSpec,
    point: &SweepPoint,
    doublings: usize,
    opts: &SweepOptions,
) -> Result<ConvergenceReport, SweepError> {
    if doublings == 0 {
        return Err(SweepError::InvalidGrid("doublings must be at least 1".into()));
    }
    let mut n_sites = Vec::new();
    let mut records = Vec::new();
    for d in 0..=doublings {
        let bath = base.with_sites(base.n_sites << d);
        let grid = SweepGrid::point(bath, point.system, point.tau, point.eta);
        let mut rows = run_sweep(&grid, opts)?;
        n_sites.push(bath.n_sites);
        records.push(rows.remove(0));
    }
    let rel_diffs: Vec<f64> = records.windows(2).map(|w| record_rel_diff(&w[0], &w[1])).collect();
    let all_solved = records.iter().all(|r| r.p_star.is_finite());
    let last = *rel_diffs.last().unwrap();
    Ok(ConvergenceReport {
        n_sites,
        records,
        rel_diffs,
        threshold: CONVERGENCE_THRESHOLD,
        passed: all_solved && last < CONVERGENCE_THRESHOLD,
    })
}

/// Two-stage grid argmax: the coarse grid, then a local grid of `step`
/// spanning `+- half_width` around the coarse winner (clipped to the coarse
/// range). Ties go to the smaller abscissa; non-finite values are skipped.
pub fn refined_argmax(
    coarse: &[f64],
    step: f64,
    half_width: f64,
    f: impl Fn(f64) -> f64,
) -> Option<(f64, f64)> {
    let best_of = |xs: &[f64]| -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for &x in xs {
            let v = f(x);
            if v.is_finite() && best.map_or(true, |(bx, b)| v > b || (v == b && x < bx)) {
                best = Some((x, v));
            }
        }
        best
    };
    let (x0, v0) = best_of(coarse)?;
    if !(step > 0.0) || !(half_width > 0.0) {
        return Some((x0, v0));
    }
    let lo = (x0 - half_width).max(coarse[0]);
    let hi = (x0 + half_width).min(*coarse.last().unwrap());
    let count = ((hi - lo) / step).round() as usize + 1;
    let mut fine = linspace(lo, hi, count);
    fine.push(x0);
    match best_of(&fine) {
        Some((x, v)) if v > v0 || (v == v0 && x < x0) => Some((x, v)),
        _ => Some((x0, v0)),
    }
}

/// Quantity maximized by [`PointContext`]-based searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    CSe,
    JQ,
    REff,
}

impl Observable {
    pub fn of(self, r: &ObservableRecord) -> f64 {
        match self {
            Observable::CSe => r.c_se,
            Observable::JQ => r.j_q,
            Observable::REff => r.r_eff,
        }
    }
}

/// Chemical potential maximizing `observable` at fixed `(tau, eta, omega0)`.
pub fn mu_argmax(
    ctx: &PointContext<'_>,
    eta: f64,
    observable: Observable,
    coarse_mu: &[f64],
    step: f64,
    half_width: f64,
) -> Option<(f64, f64)> {
    refined_argmax(coarse_mu, step, half_width, |mu| observable.of(&ctx.evaluate(eta, mu)))
}
