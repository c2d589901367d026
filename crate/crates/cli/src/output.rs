//! CSV schemas. Floats are written with 17 significant digits so every value
//! parses back to the same `f64`; infinities are `inf`, missing values `nan`.

use std::io::{Read, Write};

use stroboreset_core::observables::ObservableRecord;
use stroboreset_core::sweeps::OperatingPoints;
use thiserror::Error;

pub const SWEEP_HEADER: [&str; 16] = [
    "tau",
    "eta",
    "mu",
    "omega0",
    "n_sites",
    "p_star",
    "c_se",
    "q_sup",
    "j_q",
    "sigma_reset",
    "sigma_rate",
    "r_eff",
    "dn_e",
    "j_gc",
    "rho_spectral",
    "converged",
];

pub const SPECTRUM_HEADER: [&str; 6] = ["omega_k", "g_k_sq", "x_re", "x_im", "s_c", "s_c_guide"];

pub const OPERATING_HEADER: [&str; 7] = [
    "tau",
    "eta_max_jq",
    "jq_max",
    "eta_max_cse",
    "cse_max",
    "eta_max_r",
    "r_max",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}, column {column}: cannot parse '{value}'")]
    Value {
        row: usize,
        column: &'static str,
        value: String,
    },
}

pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

fn record_fields(r: &ObservableRecord) -> Vec<String> {
    let mut out: Vec<String> = [r.tau, r.eta, r.mu, r.omega0]
        .iter()
        .map(|&v| format_f64(v))
        .collect();
    out.push(r.n_sites.to_string());
    out.extend(
        [
            r.p_star,
            r.c_se,
            r.q_sup,
            r.j_q,
            r.sigma_reset,
            r.sigma_rate,
            r.r_eff,
            r.dn_e,
            r.j_gc,
            r.rho_spectral,
        ]
        .iter()
        .map(|&v| format_f64(v)),
    );
    out.push(r.converged.to_string());
    out
}

pub fn write_records<W: Write>(out: W, records: &[ObservableRecord]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ObservableRecord>, CsvError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(CsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64, CsvError> {
            rec[i].parse::<f64>().map_err(|_| CsvError::Value {
                row: row + 1,
                column: SWEEP_HEADER[i],
                value: rec[i].to_string(),
            })
        };
        let n_sites = rec[4].parse::<usize>().map_err(|_| CsvError::Value {
            row: row + 1,
            column: SWEEP_HEADER[4],
            value: rec[4].to_string(),
        })?;
        let converged = rec[15].parse::<bool>().map_err(|_| CsvError::Value {
            row: row + 1,
            column: SWEEP_HEADER[15],
            value: rec[15].to_string(),
        })?;
        out.push(ObservableRecord {
            tau: field(0)?,
            eta: field(1)?,
            mu: field(2)?,
            omega0: field(3)?,
            n_sites,
            p_star: field(5)?,
            c_se: field(6)?,
            q_sup: field(7)?,
            j_q: field(8)?,
            sigma_reset: field(9)?,
            sigma_rate: field(10)?,
            r_eff: field(11)?,
            dn_e: field(12)?,
            j_gc: field(13)?,
            rho_spectral: field(14)?,
            converged,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumRow {
    pub omega_k: f64,
    pub g_k_sq: f64,
    pub x_re: f64,
    pub x_im: f64,
    pub s_c: f64,
    pub s_c_guide: f64,
}

pub fn write_spectrum<W: Write>(out: W, rows: &[SpectrumRow]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPECTRUM_HEADER)?;
    for r in rows {
        w.write_record(
            [r.omega_k, r.g_k_sq, r.x_re, r.x_im, r.s_c, r.s_c_guide]
                .iter()
                .map(|&v| format_f64(v)),
        )?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_operating_points<W: Write>(out: W, points: &[OperatingPoints]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OPERATING_HEADER)?;
    for p in points {
        w.write_record(
            [
                p.tau,
                p.eta_max_jq,
                p.jq_max,
                p.eta_max_cse,
                p.cse_max,
                p.eta_max_r,
                p.r_max,
            ]
            .iter()
            .map(|&v| format_f64(v)),
        )?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ObservableRecord {
        ObservableRecord {
            tau: 0.2,
            eta: 0.5,
            mu: 0.0,
            omega0: 0.8,
            n_sites: 400,
            p_star: 0.460_030_015_401_983_57,
            c_se: 2.050_057_556_404_513_8e-4,
            q_sup: 1.511e-3,
            j_q: 7.556_776_578_225_038e-3,
            sigma_reset: 1.909_520_723_586_411e-5,
            sigma_rate: 9.5e-5,
            r_eff: f64::INFINITY,
            dn_e: -3.1e-15,
            j_gc: 7.556_776_578_225_038e-3,
            rho_spectral: 0.986_921_16,
            converged: true,
        }
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[sample()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            "tau,eta,mu,omega0,n_sites,p_star,c_se,q_sup,j_q,sigma_reset,sigma_rate,r_eff,dn_e,j_gc,rho_spectral,converged"
        );
        assert!(text.lines().nth(1).unwrap().contains(",inf,"));
    }

    #[test]
    fn records_round_trip() {
        let mut buf = Vec::new();
        let mut failed = sample();
        failed.p_star = f64::NAN;
        failed.converged = false;
        write_records(&mut buf, &[sample(), failed.clone()]).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back[0], sample());
        assert!(back[1].p_star.is_nan());
        assert!(!back[1].converged);
    }

    #[test]
    fn other_headers() {
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "omega_k,g_k_sq,x_re,x_im,s_c,s_c_guide");
        let mut buf = Vec::new();
        write_operating_points(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            "tau,eta_max_jq,jq_max,eta_max_cse,cse_max,eta_max_r,r_max"
        );
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "tau,eta\n0.1,0.2\n";
        assert!(matches!(read_records(text.as_bytes()), Err(CsvError::Header(_))));
    }
}
