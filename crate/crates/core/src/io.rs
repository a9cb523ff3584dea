//! Flat-file formats: CSV tables and radial graph snapshots.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::energy::{DeficitRow, EnergyReport};
use crate::error::{Error, Result};
use crate::graph::{DerivMode, RadialGraph, SphereGrid};
use crate::optimizer::TraceRow;

pub const SCAN_HEADER: &str = "m,radius,E_ball,E_split2,deficit,deficit_err";
pub const TRACE_HEADER: &str = "iter,energy,grad_norm,vol_drift";
pub const BALL_HEADER: &str = "radius,volume,perimeter,nonlocal,total,error_estimate";

pub fn scan_csv(rows: &[DeficitRow]) -> String {
    let mut s = format!("{SCAN_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{:?},{:?},{:?},{:?},{:?},{:?}", r.m, r.radius, r.e_ball, r.e_split2, r.deficit, r.deficit_err);
    }
    s
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = format!("{TRACE_HEADER}\n");
    for t in trace {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", t.iteration, t.energy, t.grad_norm, t.vol_drift);
    }
    s
}

pub fn ball_csv(radius: f64, e: &EnergyReport) -> String {
    format!(
        "{BALL_HEADER}\n{:?},{:?},{:?},{:?},{:?},{:?}\n",
        radius, e.volume, e.perimeter, e.nonlocal, e.total, e.error_estimate
    )
}

const MAGIC: &str = "# nlhyp radial graph snapshot v1";
const CHECKSUM_KEY: &str = "sha256=";

fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

fn mode_name(mode: DerivMode) -> &'static str {
    match mode {
        DerivMode::Spectral => "spectral",
        DerivMode::FiniteDifference => "finite-difference",
    }
}

/// Snapshot text: magic line, grid header, one row per node (angles then `R`),
/// and a final checksum line over everything above it.
pub fn write_snapshot(graph: &RadialGraph) -> String {
    let mut body = format!("{MAGIC}\n");
    match *graph.grid() {
        SphereGrid::Circle { n_theta } => {
            let _ = writeln!(body, "n=2,grid=circle,n_theta={n_theta},mode={}", mode_name(graph.mode()));
            body.push_str("theta,R\n");
        }
        SphereGrid::Sphere { n_colat, n_lon } => {
            let _ = writeln!(body, "n=3,grid=sphere,n_colat={n_colat},n_lon={n_lon},mode={}", mode_name(graph.mode()));
            body.push_str("colat,lon,R\n");
        }
    }
    for (a, r) in graph.angles().iter().zip(graph.values()) {
        for x in a {
            let _ = write!(body, "{x:?},");
        }
        let _ = writeln!(body, "{r:?}");
    }
    let sum = digest(&body);
    format!("{body}{CHECKSUM_KEY}{sum}\n")
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn header_field<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| format_err(format!("header lacks {key}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| format_err(format!("bad {what}: {s}")))
}

/// Inverse of [`write_snapshot`]; rejects checksum mismatches and grids whose angles differ.
pub fn read_snapshot(text: &str) -> Result<RadialGraph> {
    let last_start = text.trim_end_matches('\n').rfind('\n').map_or(0, |i| i + 1);
    let (body, tail) = text.split_at(last_start);
    let sum = tail.trim_end().strip_prefix(CHECKSUM_KEY).ok_or_else(|| format_err("missing checksum line"))?;
    if digest(body) != sum {
        return Err(format_err("checksum mismatch"));
    }
    let mut lines = body.lines();
    if lines.next() != Some(MAGIC) {
        return Err(format_err("not a snapshot"));
    }
    let header = lines.next().ok_or_else(|| format_err("missing header"))?;
    let fields: Vec<(&str, &str)> = header.split(',').filter_map(|kv| kv.split_once('=')).collect();
    let mode = match header_field(&fields, "mode")? {
        "spectral" => DerivMode::Spectral,
        "finite-difference" => DerivMode::FiniteDifference,
        other => return Err(format_err(format!("unknown mode {other}"))),
    };
    let cols = lines.next().ok_or_else(|| format_err("missing column line"))?.split(',').count();
    let mut angles = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let row: Vec<f64> = line
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|_| format_err(format!("bad number in row: {line}"))))
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(format_err(format!("row has {} columns, expected {cols}", row.len())));
        }
        values.push(row[cols - 1]);
        angles.push(row[..cols - 1].to_vec());
    }
    let graph = match header_field(&fields, "grid")? {
        "circle" => {
            let n_theta = parse_usize(header_field(&fields, "n_theta")?, "n_theta")?;
            if values.len() != n_theta {
                return Err(format_err("row count does not match n_theta"));
            }
            RadialGraph::circle(values, mode)?
        }
        "sphere" => {
            let n_colat = parse_usize(header_field(&fields, "n_colat")?, "n_colat")?;
            let n_lon = parse_usize(header_field(&fields, "n_lon")?, "n_lon")?;
            if values.len() != n_colat * n_lon {
                return Err(format_err("row count does not match the grid"));
            }
            RadialGraph::sphere(n_colat, n_lon, values, mode)?
        }
        other => return Err(format_err(format!("unknown grid {other}"))),
    };
    for (a, b) in graph.angles().iter().zip(&angles) {
        if a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12) {
            return Err(format_err("node angles do not match the declared grid"));
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_round_trip_is_exact() {
        let g = RadialGraph::circle_from_fourier(24, 0.7, &[(3, 0.1, -0.05)]).unwrap();
        let text = write_snapshot(&g);
        let back = read_snapshot(&text).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back, g);
        assert_eq!(write_snapshot(&back), text);
    }

    #[test]
    fn sphere_round_trip_is_exact() {
        let g = RadialGraph::sphere_from_fn(6, 12, DerivMode::FiniteDifference, |t, p| 1.0 + 0.1 * t.cos() * p.sin()).unwrap();
        let back = read_snapshot(&write_snapshot(&g)).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.mode(), DerivMode::FiniteDifference);
    }

    #[test]
    fn tampering_is_detected() {
        let g = RadialGraph::circle_from_fourier(8, 1.0, &[]).unwrap();
        let text = write_snapshot(&g).replacen("1.0\n", "1.5\n", 1);
        assert!(matches!(read_snapshot(&text), Err(Error::Format(_))));
        assert!(read_snapshot("garbage").is_err());
    }

    #[test]
    fn scan_header() {
        let s = scan_csv(&[]);
        assert_eq!(s, "m,radius,E_ball,E_split2,deficit,deficit_err\n");
    }
}
