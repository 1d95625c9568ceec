//! Output writers: CSV tables and the flat-binary volume format.
//!
//! Binary volumes carry a 64-byte ASCII header
//!
//! ```text
//! FBIN1 <nx> <ny> <nz> <dx> <dy> <dz> <ox> <oy> <oz> <tag>
//! ```
//!
//! space-padded to 63 bytes plus a trailing newline; spacings and origin are
//! in mm. Data follows as little-endian f32, x fastest, then y, then z.
//! Planes are volumes with one dimension equal to 1.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::postproc::{GainRow, SParamTrace};
use crate::{Error, Result};

pub const FLAT_HEADER_LEN: usize = 64;

fn fmt_mm(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Write a scalar volume (or plane) in the flat-binary format.
pub fn write_flat_binary(
    path: &Path,
    dims: (usize, usize, usize),
    spacing_mm: [f64; 3],
    origin_mm: [f64; 3],
    tag: &str,
    data: &[f64],
) -> Result<()> {
    if data.len() != dims.0 * dims.1 * dims.2 {
        return Err(Error::BoundsMismatch(format!(
            "volume data length {} does not match dims {:?}",
            data.len(),
            dims
        )));
    }
    let mut header = format!(
        "FBIN1 {} {} {} {} {} {} {} {} {} {}",
        dims.0,
        dims.1,
        dims.2,
        fmt_mm(spacing_mm[0]),
        fmt_mm(spacing_mm[1]),
        fmt_mm(spacing_mm[2]),
        fmt_mm(origin_mm[0]),
        fmt_mm(origin_mm[1]),
        fmt_mm(origin_mm[2]),
        tag
    );
    if header.len() > FLAT_HEADER_LEN - 1 {
        return Err(Error::Config(format!(
            "flat-binary header too long ({} bytes): {header}",
            header.len()
        )));
    }
    while header.len() < FLAT_HEADER_LEN - 1 {
        header.push(' ');
    }
    header.push('\n');

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header.as_bytes())?;
    for &v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a flat-binary header; returns (dims, spacing, origin, tag).
pub fn read_flat_header(bytes: &[u8]) -> Result<((usize, usize, usize), [f64; 3], [f64; 3], String)> {
    if bytes.len() < FLAT_HEADER_LEN {
        return Err(Error::Config("flat-binary file shorter than its header".into()));
    }
    let text = std::str::from_utf8(&bytes[..FLAT_HEADER_LEN])
        .map_err(|_| Error::Config("header is not ASCII".into()))?;
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 11 || fields[0] != "FBIN1" {
        return Err(Error::Config(format!("bad flat-binary header: {text:?}")));
    }
    let u = |s: &str| s.parse::<usize>().map_err(|e| Error::Config(format!("header int: {e}")));
    let f = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("header float: {e}")));
    Ok((
        (u(fields[1])?, u(fields[2])?, u(fields[3])?),
        [f(fields[4])?, f(fields[5])?, f(fields[6])?],
        [f(fields[7])?, f(fields[8])?, f(fields[9])?],
        fields[10].to_string(),
    ))
}

pub fn write_s11_csv(path: &Path, trace: &SParamTrace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "freq_hz,re,im,mag_db")?;
    for i in 0..trace.freqs.len() {
        writeln!(
            w,
            "{:.6e},{:.9e},{:.9e},{:.4}",
            trace.freqs[i],
            trace.s11[i].re,
            trace.s11[i].im,
            trace.mag_db(i)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One pattern-cut row.
pub struct PatternRow {
    pub freq_hz: f64,
    pub plane: &'static str,
    pub theta_deg: f64,
    pub e_co_db: f64,
    pub e_cross_db: f64,
    pub directivity_dbi: f64,
    pub realized_gain_dbi: f64,
}

pub fn write_pattern_csv(path: &Path, rows: &[PatternRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "freq_hz,plane,theta_deg,e_co_db,e_cross_db,directivity_dbi,realized_gain_dbi")?;
    for r in rows {
        writeln!(
            w,
            "{:.6e},{},{:.1},{:.3},{:.3},{:.3},{:.3}",
            r.freq_hz, r.plane, r.theta_deg, r.e_co_db, r.e_cross_db, r.directivity_dbi, r.realized_gain_dbi
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gain_csv(path: &Path, rows: &[GainRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "freq_hz,gain_dbi,rad_eff_pct,tot_eff_pct,flagged")?;
    for r in rows {
        writeln!(
            w,
            "{:.6e},{:.3},{:.2},{:.2},{}",
            r.freq, r.realized_gain_dbi, r.rad_eff_pct, r.tot_eff_pct, r.flagged as u8
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column port record: time_s, amplitude.
pub fn write_port_csv(path: &Path, dt: f64, series: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "time_s,amplitude")?;
    for (n, v) in series.iter().enumerate() {
        writeln!(w, "{:.9e},{:.9e}", (n + 1) as f64 * dt, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body)?;
    Ok(())
}
