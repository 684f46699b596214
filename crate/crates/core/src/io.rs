//! File formats: portable grid files (PGF), 8-bit PGM previews, plain-text value lists.
//!
//! A PGF file is an ASCII header line `pgf <d> <n1> [n2] [n3]\n` followed by the N
//! pixel values as little-endian IEEE 754 doubles in row-major order.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, ObjectField};

pub fn encode_pgf(field: &ObjectField) -> Vec<u8> {
    let grid = field.grid();
    let mut header = format!("pgf {}", grid.dims());
    for n in grid.extents() {
        header.push_str(&format!(" {n}"));
    }
    header.push('\n');
    let mut out = header.into_bytes();
    out.reserve(8 * field.len());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_pgf(bytes: &[u8]) -> Result<ObjectField> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing PGF header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Format("PGF header is not ASCII".into()))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some("pgf") {
        return Err(Error::Format("PGF header must start with `pgf`".into()));
    }
    let nums: Vec<usize> = parts
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PGF header field `{p}`")))
        })
        .collect::<Result<_>>()?;
    let (&d, extents) = nums
        .split_first()
        .ok_or_else(|| Error::Format("PGF header lacks dimension".into()))?;
    if extents.len() != d {
        return Err(Error::Format(format!(
            "PGF header declares {d} dimensions but lists {} extents",
            extents.len()
        )));
    }
    let grid = Grid::new(extents)?;
    let body = &bytes[newline + 1..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "PGF body has {} bytes, expected {}",
            body.len(),
            8 * grid.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ObjectField::new(grid, values)
}

pub fn write_pgf(path: impl AsRef<Path>, field: &ObjectField) -> Result<()> {
    fs::write(path, encode_pgf(field))?;
    Ok(())
}

pub fn read_pgf(path: impl AsRef<Path>) -> Result<ObjectField> {
    decode_pgf(&fs::read(path)?)
}

/// Binary PGM (P5) with min-max scaling to 0..=255. Two-dimensional fields only.
pub fn encode_pgm(field: &ObjectField) -> Result<Vec<u8>> {
    let grid = field.grid();
    if grid.dims() != 2 {
        return Err(Error::UnsupportedGrid(format!(
            "PGM export needs a 2-d field, got {grid}"
        )));
    }
    let (rows, cols) = (grid.extents()[0], grid.extents()[1]);
    let lo = field.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(
        field
            .values()
            .iter()
            .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, field: &ObjectField) -> Result<()> {
    fs::write(path, encode_pgm(field)?)?;
    Ok(())
}

/// One value per line; blank lines and `#` comments are skipped.
pub fn read_value_list(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let file = fs::File::open(path)?;
    let mut values = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad value `{t}`")))?,
        );
    }
    Ok(values)
}

pub fn write_value_list(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for v in values {
        writeln!(f, "{v:e}")?;
    }
    Ok(())
}
