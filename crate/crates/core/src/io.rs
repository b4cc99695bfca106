//! CSV tables and the binary field raster.
//!
//! Raster layout, all little-endian:
//! `b"SHEQ"`, `u32` version, `u32` d, `d × u64` points per axis, `f64` spacing,
//! `f64` half-length, `f64` t, `u64` seed, `u32` byte length of the spectral
//! convention string, the UTF-8 string, then `n^d` `f64` values in row-major order.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::solver::{MonitorRow, SolutionTrace};
use crate::tower::Tower;
use crate::uniqueness::DecayRow;
use crate::weight::WeightField;
use std::io::{Read, Write};

pub const RASTER_MAGIC: &[u8; 4] = b"SHEQ";
pub const RASTER_VERSION: u32 = 1;
pub const SPECTRAL_CONVENTION: &str =
    "unitary-dft n^(-d/2); x_j=-L+j*dx; xi_k=pi*k/L, k in (-n/2,n/2]; q_k=sigma^2*mu(xi_k)/dx^d; ou rate |xi|^2/2";

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: GridSpec,
    pub t: f64,
    pub seed: u64,
    pub convention: String,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(grid: GridSpec, t: f64, seed: u64, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!("raster of {} values on grid of {}", data.len(), grid.len())));
        }
        Ok(Raster { grid, t, seed, convention: SPECTRAL_CONVENTION.to_string(), data })
    }
}

pub fn write_raster<W: Write>(mut w: W, r: &Raster) -> Result<()> {
    w.write_all(RASTER_MAGIC)?;
    w.write_all(&RASTER_VERSION.to_le_bytes())?;
    w.write_all(&(r.grid.d as u32).to_le_bytes())?;
    for _ in 0..r.grid.d {
        w.write_all(&(r.grid.n as u64).to_le_bytes())?;
    }
    for v in [r.grid.spacing(), r.grid.half_len, r.t] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&r.seed.to_le_bytes())?;
    w.write_all(&(r.convention.len() as u32).to_le_bytes())?;
    w.write_all(r.convention.as_bytes())?;
    for v in &r.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_raster<R: Read>(mut r: R) -> Result<Raster> {
    if &take::<4, _>(&mut r)? != RASTER_MAGIC {
        return Err(Error::InvalidParameter("not a field raster (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != RASTER_VERSION {
        return Err(Error::InvalidParameter(format!("unsupported raster version {version}")));
    }
    let d = u32::from_le_bytes(take(&mut r)?) as usize;
    if d != 1 && d != 2 {
        return Err(Error::InvalidParameter(format!("raster dimension {d}")));
    }
    let ns: Vec<usize> = (0..d).map(|_| take(&mut r).map(|b| u64::from_le_bytes(b) as usize)).collect::<Result<_>>()?;
    if ns.iter().any(|n| *n != ns[0]) {
        return Err(Error::InvalidParameter(format!("unequal axis lengths {ns:?}")));
    }
    let spacing = f64::from_le_bytes(take(&mut r)?);
    let half_len = f64::from_le_bytes(take(&mut r)?);
    let t = f64::from_le_bytes(take(&mut r)?);
    let seed = u64::from_le_bytes(take(&mut r)?);
    let len = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut s = vec![0u8; len];
    r.read_exact(&mut s)?;
    let convention = String::from_utf8(s).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let grid = GridSpec::new(d, ns[0], half_len)?;
    if (grid.spacing() - spacing).abs() > 1e-12 * spacing {
        return Err(Error::InvalidParameter(format!("spacing {spacing} inconsistent with n = {} and L = {half_len}", ns[0])));
    }
    let data = (0..grid.len()).map(|_| take(&mut r).map(f64::from_le_bytes)).collect::<Result<_>>()?;
    Ok(Raster { grid, t, seed, convention, data })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn coord_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

/// Columns `x1[, x2], <name>`.
pub fn write_field_csv<W: Write>(w: W, grid: &GridSpec, name: &str, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values on grid of {}", values.len(), grid.len())));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut head = coord_header(grid.d);
    head.push(name.to_string());
    out.write_record(&head).map_err(csv_err)?;
    for (i, v) in values.iter().enumerate() {
        let mut rec: Vec<String> = grid.point(i).iter().map(|x| x.to_string()).collect();
        rec.push(v.to_string());
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `t, x1[, x2], rho`.
pub fn write_weight_csv<W: Write>(w: W, field: &WeightField) -> Result<()> {
    let d = field.points.first().map_or(1, |p| p.len());
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["t".to_string()];
    head.extend(coord_header(d));
    head.push("rho".into());
    out.write_record(&head).map_err(csv_err)?;
    for (t, row) in field.times.iter().zip(&field.rho) {
        for (p, v) in field.points.iter().zip(row) {
            let mut rec = vec![t.to_string()];
            rec.extend(p.iter().map(|x| x.to_string()));
            rec.push(v.to_string());
            out.write_record(&rec).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Columns `t, sup_u, sup_q, K, flag`; `K` is written in tower notation when not representable.
pub fn write_trace_csv<W: Write>(w: W, trace: &SolutionTrace, k: Option<&Tower>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "sup_u", "sup_q", "K", "flag"]).map_err(csv_err)?;
    let ks = k.map_or_else(String::new, |k| if k.is_finite_f64() { k.to_f64().to_string() } else { k.to_string() });
    for r in &trace.rows {
        let MonitorRow { t, sup_u, sup_q, flag, .. } = *r;
        out.write_record([t.to_string(), sup_u.to_string(), opt(sup_q), ks.clone(), (flag as u8).to_string()]).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `t, level_pair, norm, K, nu, nu1, nu2`.
pub fn write_decay_csv<W: Write>(w: W, rows: &[DecayRow]) -> Result<()> {
    write_rows_csv(w, rows)
}

/// Any serializable row type, one header from the field names.
pub fn write_rows_csv<W: Write, T: serde::Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_round_trip() {
        let g = GridSpec::new(2, 8, 3.0).unwrap();
        let data: Vec<f64> = (0..64).map(|i| i as f64 * 0.5 - 3.0).collect();
        let r = Raster::new(g, 0.25, 77, data).unwrap();
        let mut buf = Vec::new();
        write_raster(&mut buf, &r).unwrap();
        assert_eq!(&buf[..4], b"SHEQ");
        assert_eq!(buf.len(), 4 + 4 + 4 + 16 + 24 + 8 + 4 + SPECTRAL_CONVENTION.len() + 64 * 8);
        let back = read_raster(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        buf[0] = b'X';
        assert!(read_raster(buf.as_slice()).is_err());
    }

    #[test]
    fn field_csv_layout() {
        let g = GridSpec::new(1, 4, 1.0).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &g, "Z", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x1,Z");
        assert_eq!(lines[1], "-1,1");
        assert_eq!(lines.len(), 5);
    }
}
