//! Subcommand implementations. Each returns the process exit status.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use stroboreset_core::asymptotics::{guide_weight, GuideParams};
use stroboreset_core::linalg::RadiusOptions;
use stroboreset_core::model::{bath_basis, reference_state, BathSpec, SystemSpec};
use stroboreset_core::observables::ObservableRecord;
use stroboreset_core::resetmap::{propagator, SolverOptions};
use stroboreset_core::sweeps::{
    self, convergence_study, mu_argmax, operating_points, run_sweep, Observable, PointContext,
    SweepGrid, SweepOptions, SweepPoint,
};
use stroboreset_core::validation::run_validation;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output::{self, CsvError, SpectrumRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Config = 2,
    NotConverged = 3,
    ValidationFailed = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: CsvError },
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Config(_) => ExitStatus::Config,
            _ => ExitStatus::Failure,
        }
    }
}

impl From<sweeps::SweepError> for CliError {
    fn from(e: sweeps::SweepError) -> Self {
        match e {
            sweeps::SweepError::InvalidGrid(m) => CliError::Config(ConfigError::Invalid(m)),
            sweeps::SweepError::Model(m) => CliError::Config(ConfigError::Invalid(m.to_string())),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    let defaults = SolverOptions::default();
    let radius = RadiusOptions {
        seed: cfg.power_iter_seed,
        tol: cfg.radius_tol.unwrap_or(defaults.radius.tol),
        ..defaults.radius
    };
    SweepOptions {
        solver: SolverOptions {
            radius,
            iter_tol: cfg.iter_tol.unwrap_or(defaults.iter_tol),
            max_cycles: cfg.max_cycles.unwrap_or(defaults.max_cycles),
            ..defaults
        },
        workers: cfg.n_workers,
        boundary_tol: cfg.boundary_tol.unwrap_or(sweeps::DEFAULT_BOUNDARY_TOL),
    }
}

/// Config values over `defaults`; physical constants always come from the config.
pub fn resolve_grid(cfg: &RunConfig, defaults: SweepGrid) -> Result<SweepGrid, CliError> {
    let grid = SweepGrid {
        tau_values: cfg.tau.clone().unwrap_or(defaults.tau_values),
        eta_values: cfg.eta.clone().unwrap_or(defaults.eta_values),
        mu_values: cfg.mu.clone().unwrap_or(defaults.mu_values),
        omega0_values: cfg.omega0.clone().unwrap_or(defaults.omega0_values),
        bath: BathSpec {
            n_sites: cfg.n_sites.unwrap_or(defaults.bath.n_sites),
            hopping: cfg.hopping,
            coupling: cfg.coupling,
        },
        beta: cfg.beta,
    };
    grid.validate()?;
    Ok(grid)
}

fn single_point_defaults(n_sites: usize) -> SweepGrid {
    let sys = SystemSpec::default();
    SweepGrid::point(BathSpec::default().with_sites(n_sites), sys, 0.2, 0.5)
}

fn require_single(grid: &SweepGrid, command: &str) -> Result<(), CliError> {
    let axes = [
        ("tau", grid.tau_values.len()),
        ("eta", grid.eta_values.len()),
        ("mu", grid.mu_values.len()),
        ("omega0", grid.omega0_values.len()),
    ];
    for (name, len) in axes {
        if len != 1 {
            return Err(ConfigError::Invalid(format!(
                "{command} takes a single {name} value, got {len}; use sweep for grids"
            ))
            .into());
        }
    }
    Ok(())
}

fn output_path(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.output_path.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// `dir/stem_suffix.ext`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        CliError::Config(ConfigError::Invalid(format!(
            "output {} is not writable: {e}",
            path.display()
        )))
    })
}

fn write_failed(path: &Path, source: CsvError) -> CliError {
    CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn report_rows(path: &Path, rows: &[ObservableRecord]) -> ExitStatus {
    let flagged = rows.iter().filter(|r| !r.converged).count();
    eprintln!("wrote {} rows to {}", rows.len(), path.display());
    if flagged > 0 {
        eprintln!("{flagged} rows not converged (flagged converged=false)");
        ExitStatus::NotConverged
    } else {
        ExitStatus::Success
    }
}

fn write_sweep_rows(path: &Path, rows: &[ObservableRecord]) -> Result<ExitStatus, CliError> {
    let file = create(path)?;
    output::write_records(file, rows).map_err(|e| write_failed(path, e))?;
    Ok(report_rows(path, rows))
}

fn grid_sweep(cfg: &RunConfig, grid: &SweepGrid, default_out: &str) -> Result<ExitStatus, CliError> {
    let path = output_path(cfg, default_out);
    // fail on an unwritable path before the sweep, not after
    drop(create(&path)?);
    let rows = run_sweep(grid, &sweep_options(cfg))?;
    write_sweep_rows(&path, &rows)
}

pub fn cmd_fixed_point(cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let grid = resolve_grid(cfg, single_point_defaults(400))?;
    require_single(&grid, "fixed-point")?;
    grid_sweep(cfg, &grid, "fixed_point.csv")
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let grid = resolve_grid(cfg, sweeps::linecut_grid())?;
    grid_sweep(cfg, &grid, "sweep.csv")
}

pub fn cmd_mu_sweep(cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let grid = resolve_grid(cfg, sweeps::mu_sweep_grid())?;
    let status = grid_sweep(cfg, &grid, "mu_sweep.csv")?;
    if cfg.mu_refine {
        let opts = sweep_options(cfg);
        let basis = bath_basis(&grid.bath).map_err(|e| CliError::Runtime(e.to_string()))?;
        for &omega0 in &grid.omega0_values {
            for &tau in &grid.tau_values {
                let sys = SystemSpec {
                    omega0,
                    beta: grid.beta,
                    mu: 0.0,
                };
                let blocks = propagator(&basis, &sys, tau).map_err(|e| CliError::Runtime(e.to_string()))?;
                let ctx = PointContext {
                    basis: &basis,
                    blocks: &blocks,
                    tau,
                    omega0,
                    beta: grid.beta,
                    opts: &opts,
                };
                for &eta in &grid.eta_values {
                    match mu_argmax(
                        &ctx,
                        eta,
                        Observable::CSe,
                        &grid.mu_values,
                        cfg.refine_step,
                        cfg.refine_half_width,
                    ) {
                        Some((mu, value)) => eprintln!(
                            "omega0={omega0} tau={tau} eta={eta}: c_se max {value:.6e} at mu={mu:.4}"
                        ),
                        None => eprintln!("omega0={omega0} tau={tau} eta={eta}: no finite c_se"),
                    }
                }
            }
        }
    }
    Ok(status)
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let defaults = SweepGrid {
        eta_values: vec![0.2, 0.5, 0.8, 0.95],
        ..sweeps::linecut_grid()
    };
    let grid = resolve_grid(cfg, defaults)?;
    let opts = sweep_options(cfg);
    let base = output_path(cfg, "spectrum.csv");
    let basis = bath_basis(&grid.bath).map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))?;

    let mut points = Vec::new();
    for &omega0 in &grid.omega0_values {
        for &tau in &grid.tau_values {
            for &mu in &grid.mu_values {
                for &eta in &grid.eta_values {
                    points.push((omega0, tau, mu, eta));
                }
            }
        }
    }
    let paths: Vec<PathBuf> = if points.len() == 1 {
        vec![base.clone()]
    } else {
        points
            .iter()
            .map(|(w0, tau, mu, eta)| suffixed(&base, &format!("tau{tau}_eta{eta}_mu{mu}_omega0{w0}")))
            .collect()
    };
    for p in &paths {
        drop(create(p)?);
    }

    let mut status = ExitStatus::Success;
    for (&(omega0, tau, mu, eta), path) in points.iter().zip(&paths) {
        let sys = SystemSpec { omega0, beta: grid.beta, mu };
        let blocks = propagator(&basis, &sys, tau).map_err(|e| CliError::Runtime(e.to_string()))?;
        let ctx = PointContext {
            basis: &basis,
            blocks: &blocks,
            tau,
            omega0,
            beta: grid.beta,
            opts: &opts,
        };
        let (fp, rec) = ctx.solve(eta, mu);
        let Some(fp) = fp else {
            eprintln!("no fixed point at omega0={omega0} tau={tau} mu={mu} eta={eta}; {} left empty", path.display());
            status = ExitStatus::NotConverged;
            continue;
        };
        if !rec.converged {
            status = ExitStatus::NotConverged;
        }
        let c0 = reference_state(&basis, &sys);
        let guide = GuideParams::new(&fp, &basis, &c0, &sys, tau, eta).ok();
        let rows: Vec<SpectrumRow> = (0..basis.n_modes())
            .map(|k| {
                let x = fp.state.x[k];
                SpectrumRow {
                    omega_k: basis.frequencies[k],
                    g_k_sq: basis.couplings[k].norm_sqr(),
                    x_re: x.re,
                    x_im: x.im,
                    s_c: x.norm_sqr(),
                    s_c_guide: guide
                        .as_ref()
                        .and_then(|g| guide_weight(g, k).ok())
                        .unwrap_or(f64::NAN),
                }
            })
            .collect();
        output::write_spectrum(create(path)?, &rows).map_err(|e| write_failed(path, e))?;
        eprintln!("wrote {} modes to {}", rows.len(), path.display());
    }
    Ok(status)
}

pub fn cmd_operating_points(cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let mut grid = resolve_grid(cfg, sweeps::operating_grid(cfg.include_eta_one))?;
    if !cfg.include_eta_one {
        grid.eta_values.retain(|&e| e < 1.0);
    }
    if grid.eta_values.len() < sweeps::MIN_OPERATING_POINTS {
        return Err(ConfigError::Invalid(format!(
            "operating points need at least {} eta values below 1, got {}",
            sweeps::MIN_OPERATING_POINTS,
            grid.eta_values.len()
        ))
        .into());
    }
    let base = output_path(cfg, "operating_points.csv");
    let slices: Vec<(f64, f64)> = grid
        .omega0_values
        .iter()
        .flat_map(|&w0| grid.mu_values.iter().map(move |&mu| (w0, mu)))
        .collect();
    let paths: Vec<PathBuf> = if slices.len() == 1 {
        vec![base.clone()]
    } else {
        slices
            .iter()
            .map(|(w0, mu)| suffixed(&base, &format!("mu{mu}_omega0{w0}")))
            .collect()
    };
    for p in &paths {
        drop(create(p)?);
    }

    let rows = run_sweep(&grid, &sweep_options(cfg))?;
    let flagged = rows.iter().filter(|r| !r.converged).count();
    for (&(omega0, mu), path) in slices.iter().zip(&paths) {
        let mut points = Vec::new();
        for &tau in &grid.tau_values {
            let slice: Vec<ObservableRecord> = rows
                .iter()
                .filter(|r| r.omega0 == omega0 && r.mu == mu && r.tau == tau)
                .cloned()
                .collect();
            points.push(operating_points(&slice)?);
        }
        output::write_operating_points(create(path)?, &points).map_err(|e| write_failed(path, e))?;
        eprintln!("wrote {} operating points to {}", points.len(), path.display());
    }
    if flagged > 0 {
        eprintln!("{flagged} rows not converged");
        return Ok(ExitStatus::NotConverged);
    }
    Ok(ExitStatus::Success)
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let grid = resolve_grid(cfg, single_point_defaults(200))?;
    require_single(&grid, "converge")?;
    let path = output_path(cfg, "converge.csv");
    drop(create(&path)?);
    let point = SweepPoint {
        tau: grid.tau_values[0],
        eta: grid.eta_values[0],
        system: SystemSpec {
            omega0: grid.omega0_values[0],
            beta: grid.beta,
            mu: grid.mu_values[0],
        },
    };
    let report = convergence_study(&grid.bath, &point, cfg.doublings, &sweep_options(cfg))?;
    for (w, d) in report.n_sites.windows(2).zip(&report.rel_diffs) {
        eprintln!("n_sites {} -> {}: max relative change {d:.3e}", w[0], w[1]);
    }
    output::write_records(create(&path)?, &report.records).map_err(|e| write_failed(&path, e))?;
    eprintln!("wrote {} rows to {}", report.records.len(), path.display());
    if report.passed {
        eprintln!("converged (threshold {:.0e})", report.threshold);
        Ok(ExitStatus::Success)
    } else {
        eprintln!("NOT converged (threshold {:.0e})", report.threshold);
        Ok(ExitStatus::NotConverged)
    }
}

pub fn cmd_validate(_cfg: &RunConfig) -> Result<ExitStatus, CliError> {
    let results = run_validation();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        Ok(ExitStatus::ValidationFailed)
    } else {
        Ok(ExitStatus::Success)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_keeps_extension_and_directory() {
        assert_eq!(suffixed(Path::new("out/spec.csv"), "a"), PathBuf::from("out/spec_a.csv"));
        assert_eq!(suffixed(Path::new("spec"), "b"), PathBuf::from("spec_b"));
    }

    #[test]
    fn grid_defaults_and_overrides() {
        let cfg = crate::config::parse_config("n_sites = 30\neta = 0.1, 0.2").unwrap();
        let grid = resolve_grid(&cfg, sweeps::linecut_grid()).unwrap();
        assert_eq!(grid.bath.n_sites, 30);
        assert_eq!(grid.eta_values, vec![0.1, 0.2]);
        assert_eq!(grid.tau_values, vec![0.2]);
        assert_eq!(grid.omega0_values, vec![0.8, 3.0]);
    }

    #[test]
    fn single_point_commands_reject_grids() {
        let cfg = crate::config::parse_config("tau = 0.1, 0.2").unwrap();
        let grid = resolve_grid(&cfg, single_point_defaults(10)).unwrap();
        assert!(matches!(require_single(&grid, "fixed-point"), Err(CliError::Config(_))));
    }
}
