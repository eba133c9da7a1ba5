//! CSV ingestion in long format.
//!
//! * samples: header `obs_id,value`, one row per sample point
//! * densities: header `obs_id,x,f`, equispaced `x` per observation
//! * targets: header `obs_id,y`
//!
//! Observation ids are matched as exact strings. Every error names the file
//! and the 1-based data row (the header is row 1).

use std::collections::HashMap;
use std::path::Path;

use crate::distribution::{GridDensity, DENSITY_NORM_TOL};
use crate::error::{Error, Result};

fn row_error(path: &Path, row: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}:{row}: {msg}", path.display()))
}

fn open(path: &Path, expected: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers().map_err(|e| row_error(path, 1, e))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(row_error(
            path,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), got.join(",")),
        ));
    }
    Ok(rdr)
}

fn parse_f64(path: &Path, row: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| row_error(path, row, format!("{field} '{raw}' is not a finite number")))
}

/// Groups rows by id, preserving first-appearance order.
fn grouped<T>(rows: Vec<(String, T)>) -> Vec<(String, Vec<T>)> {
    let mut order: Vec<(String, Vec<T>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (id, v) in rows {
        match index.get(&id) {
            Some(&k) => order[k].1.push(v),
            None => {
                index.insert(id.clone(), order.len());
                order.push((id, vec![v]));
            }
        }
    }
    order
}

/// Reads a samples file into `(obs_id, values)` groups.
pub fn read_samples(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rdr = open(path, &["obs_id", "value"])?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| row_error(path, row, e))?;
        if rec.len() != 2 {
            return Err(row_error(path, row, format!("expected 2 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(row_error(path, row, "empty obs_id"));
        }
        rows.push((id, parse_f64(path, row, "value", &rec[1])?));
    }
    if rows.is_empty() {
        return Err(row_error(path, 2, "no sample rows"));
    }
    Ok(grouped(rows))
}

/// Reads a densities file; each observation must use equispaced increasing
/// abscissae and integrate to one within `1e-6` (it is then renormalized).
pub fn read_densities(path: &Path) -> Result<Vec<(String, GridDensity)>> {
    let mut rdr = open(path, &["obs_id", "x", "f"])?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| row_error(path, row, e))?;
        if rec.len() != 3 {
            return Err(row_error(path, row, format!("expected 3 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(row_error(path, row, "empty obs_id"));
        }
        let x = parse_f64(path, row, "x", &rec[1])?;
        let f = parse_f64(path, row, "f", &rec[2])?;
        if f < 0.0 {
            return Err(row_error(path, row, format!("negative density value {f}")));
        }
        rows.push((id, (row, x, f)));
    }
    if rows.is_empty() {
        return Err(row_error(path, 2, "no density rows"));
    }
    grouped(rows)
        .into_iter()
        .map(|(id, pts)| {
            let first_row = pts[0].0;
            if pts.len() < 2 {
                return Err(row_error(
                    path,
                    first_row,
                    format!("obs '{id}' has fewer than 2 grid points"),
                ));
            }
            let (lo, hi) = (pts[0].1, pts[pts.len() - 1].1);
            if !(hi > lo) {
                return Err(row_error(
                    path,
                    first_row,
                    format!("obs '{id}' abscissae are not increasing"),
                ));
            }
            let h = (hi - lo) / (pts.len() - 1) as f64;
            for (j, &(row, x, _)) in pts.iter().enumerate() {
                if (x - (lo + j as f64 * h)).abs() > 1e-9 * (hi - lo) {
                    return Err(row_error(
                        path,
                        row,
                        format!("obs '{id}' abscissa {x} is not equispaced"),
                    ));
                }
            }
            let values: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let g = GridDensity::normalized(lo, hi, values.clone()).map_err(|e| row_error(path, first_row, e))?;
            let raw_integral = values
                .iter()
                .zip(g.values())
                .find(|(_, n)| **n > 0.0)
                .map(|(r, n)| r / n);
            if let Some(total) = raw_integral {
                if (total - 1.0).abs() > 1e-6_f64.max(DENSITY_NORM_TOL) {
                    return Err(row_error(
                        path,
                        first_row,
                        format!("obs '{id}' density integrates to {total}, expected 1"),
                    ));
                }
            }
            Ok((id, g))
        })
        .collect()
}

/// One observed input distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Samples(Vec<f64>),
    Density(GridDensity),
}

/// Reads a samples or densities file, chosen by its header.
pub fn read_observations(path: &Path) -> Result<Vec<(String, Observation)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| row_error(path, 1, e))?
        .iter()
        .map(str::to_string)
        .collect();
    match header.len() {
        2 => Ok(read_samples(path)?
            .into_iter()
            .map(|(id, v)| (id, Observation::Samples(v)))
            .collect()),
        3 => Ok(read_densities(path)?
            .into_iter()
            .map(|(id, g)| (id, Observation::Density(g)))
            .collect()),
        _ => Err(row_error(
            path,
            1,
            format!(
                "expected header 'obs_id,value' or 'obs_id,x,f', found '{}'",
                header.join(",")
            ),
        )),
    }
}

/// Reads a targets file into `(obs_id, y)` pairs; duplicate ids are rejected.
pub fn read_targets(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = open(path, &["obs_id", "y"])?;
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| row_error(path, row, e))?;
        if rec.len() != 2 {
            return Err(row_error(path, row, format!("expected 2 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        if let Some(prev) = seen.insert(id.clone(), row) {
            return Err(row_error(
                path,
                row,
                format!("duplicate obs_id '{id}' (first at row {prev})"),
            ));
        }
        out.push((id, parse_f64(path, row, "y", &rec[1])?));
    }
    Ok(out)
}

/// Targets aligned with `ids`; every id must be present.
pub fn match_targets(path: &Path, ids: &[String], targets: &[(String, f64)]) -> Result<Vec<f64>> {
    let map: HashMap<&str, f64> = targets.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("{}: no target for obs_id '{id}'", path.display())))
        })
        .collect()
}

/// Writes `obs_id,mean,sd` rows with 12 significant digits.
pub fn write_predictions<W: std::io::Write>(out: W, rows: &[(String, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["obs_id", "mean", "sd"])?;
    for (id, mean, sd) in rows {
        w.write_record([id.clone(), fmt_sig(*mean), fmt_sig(*sd)])?;
    }
    w.flush()?;
    Ok(())
}

/// Formats with 12 significant digits, trimming trailing zeros.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.*e}", 11, v);
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..=15).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    }
}
