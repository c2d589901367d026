//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! n_sites = 200
//! omega0 = 0.8, 3.0
//! eta = 0:1:5          # start:stop:count, both ends included
//! ```
//!
//! Grid keys left unset fall back to per-command defaults.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_sites: Option<usize>,
    pub hopping: f64,
    pub coupling: f64,
    pub beta: f64,
    pub tau: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub omega0: Option<Vec<f64>>,
    pub output_path: Option<PathBuf>,
    pub n_workers: usize,
    pub power_iter_seed: u64,
    pub include_eta_one: bool,
    pub boundary_tol: Option<f64>,
    pub iter_tol: Option<f64>,
    pub max_cycles: Option<usize>,
    pub radius_tol: Option<f64>,
    pub doublings: usize,
    pub mu_refine: bool,
    pub refine_step: f64,
    pub refine_half_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_sites: None,
            hopping: 1.0,
            coupling: 0.2,
            beta: 3.0,
            tau: None,
            eta: None,
            mu: None,
            omega0: None,
            output_path: None,
            n_workers: 1,
            power_iter_seed: 0,
            include_eta_one: false,
            boundary_tol: None,
            iter_tol: None,
            max_cycles: None,
            radius_tol: None,
            doublings: 1,
            mu_refine: false,
            refine_step: 0.005,
            refine_half_width: 0.1,
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| err(line, format!("{key}: '{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(err(line, format!("{key}: value must be finite")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, s: &str) -> Result<T, ConfigError> {
    s.trim()
        .parse()
        .map_err(|_| err(line, format!("{key}: '{}' is not a non-negative integer", s.trim())))
}

fn parse_bool(line: usize, key: &str, s: &str) -> Result<bool, ConfigError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(err(line, format!("{key}: '{other}' is not a boolean"))),
    }
}

/// Comma list or `start:stop:count`; must be non-empty and strictly increasing.
fn parse_list(line: usize, key: &str, s: &str) -> Result<Vec<f64>, ConfigError> {
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(err(line, format!("{key}: range must be start:stop:count")));
        }
        let start = parse_f64(line, key, parts[0])?;
        let stop = parse_f64(line, key, parts[1])?;
        let count: usize = parse_int(line, key, parts[2])?;
        if count == 0 {
            return Err(err(line, format!("{key}: range count must be at least 1")));
        }
        stroboreset_core::sweeps::linspace(start, stop, count)
    } else {
        s.split(',')
            .map(|p| parse_f64(line, key, p))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(err(line, format!("{key}: values must be strictly increasing")));
    }
    Ok(values)
}

fn positive(line: usize, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(err(line, format!("{key} must be positive, got {v}")))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key = value, got '{content}'")))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(err(line, format!("{key}: missing value")));
        }
        if seen.iter().any(|k| k == key) {
            return Err(err(line, format!("{key}: duplicate key")));
        }
        seen.push(key.to_string());

        match key {
            "n_sites" => {
                let n: usize = parse_int(line, key, value)?;
                if n == 0 {
                    return Err(err(line, "n_sites must be at least 1"));
                }
                cfg.n_sites = Some(n);
            }
            "hopping" => cfg.hopping = positive(line, key, parse_f64(line, key, value)?)?,
            "coupling" => {
                let v = parse_f64(line, key, value)?;
                if v < 0.0 {
                    return Err(err(line, format!("coupling must be non-negative, got {v}")));
                }
                cfg.coupling = v;
            }
            "beta" => cfg.beta = positive(line, key, parse_f64(line, key, value)?)?,
            "tau" => {
                let v = parse_list(line, key, value)?;
                if v[0] <= 0.0 {
                    return Err(err(line, "tau values must be positive"));
                }
                cfg.tau = Some(v);
            }
            "eta" => {
                let v = parse_list(line, key, value)?;
                if v[0] < 0.0 || *v.last().unwrap() > 1.0 {
                    return Err(err(line, "eta values must lie in [0, 1]"));
                }
                cfg.eta = Some(v);
            }
            "mu" => cfg.mu = Some(parse_list(line, key, value)?),
            "omega0" => cfg.omega0 = Some(parse_list(line, key, value)?),
            "output" => cfg.output_path = Some(PathBuf::from(value)),
            "workers" => {
                let n: usize = parse_int(line, key, value)?;
                if n == 0 {
                    return Err(err(line, "workers must be at least 1"));
                }
                cfg.n_workers = n;
            }
            "power_iter_seed" => cfg.power_iter_seed = parse_int(line, key, value)?,
            "include_eta_one" => cfg.include_eta_one = parse_bool(line, key, value)?,
            "boundary_tol" => cfg.boundary_tol = Some(positive(line, key, parse_f64(line, key, value)?)?),
            "iter_tol" => cfg.iter_tol = Some(positive(line, key, parse_f64(line, key, value)?)?),
            "radius_tol" => cfg.radius_tol = Some(positive(line, key, parse_f64(line, key, value)?)?),
            "max_cycles" => {
                let n: usize = parse_int(line, key, value)?;
                if n == 0 {
                    return Err(err(line, "max_cycles must be at least 1"));
                }
                cfg.max_cycles = Some(n);
            }
            "doublings" => {
                let n: usize = parse_int(line, key, value)?;
                if n == 0 || n > 6 {
                    return Err(err(line, "doublings must be between 1 and 6"));
                }
                cfg.doublings = n;
            }
            "mu_refine" => cfg.mu_refine = parse_bool(line, key, value)?,
            "refine_step" => cfg.refine_step = positive(line, key, parse_f64(line, key, value)?)?,
            "refine_half_width" => {
                cfg.refine_half_width = positive(line, key, parse_f64(line, key, value)?)?
            }
            other => return Err(err(line, format!("unknown key '{other}'"))),
        }
    }
    Ok(cfg)
}

/// Applies `STROBORESET_WORKERS` when set.
pub fn apply_worker_override(cfg: &mut RunConfig, env: Option<String>) -> Result<(), ConfigError> {
    if let Some(v) = env {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("STROBORESET_WORKERS: '{v}' is not an integer")))?;
        if n == 0 {
            return Err(ConfigError::Invalid("STROBORESET_WORKERS must be at least 1".into()));
        }
        cfg.n_workers = n;
    }
    Ok(())
}
