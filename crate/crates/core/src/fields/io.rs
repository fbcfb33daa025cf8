//! Field serialization: a 32-byte binary header followed by little-endian
//! f64 samples in row-major axis order (component-major), plus CSV export
//! for plotting.

use std::io::{Read, Write};
use std::path::Path;

use super::field::{ScalarField, VectorField};
use super::grid::Grid;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FBSD";
const VERSION: u32 = 1;

fn write_header(w: &mut impl Write, grid: &Grid, ncomp: u32) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&ncomp.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?; // reserved
    w.write_all(&grid.period().to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(Grid, u32)> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let ncomp = u32::from_le_bytes(head[16..20].try_into().unwrap());
    let period = f64::from_le_bytes(head[24..32].try_into().unwrap());
    Ok((Grid::new(dim, n, period)?, ncomp))
}

fn write_values(w: &mut impl Write, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_values(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_vector_field(path: impl AsRef<Path>, u: &VectorField) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_header(&mut f, u.grid(), u.dim() as u32)?;
    for c in u.components() {
        write_values(&mut f, c)?;
    }
    Ok(())
}

pub fn read_vector_field(path: impl AsRef<Path>) -> Result<VectorField> {
    let mut f = std::fs::File::open(path)?;
    let (grid, ncomp) = read_header(&mut f)?;
    if ncomp as usize != grid.dim() {
        return Err(Error::Format(format!(
            "expected {} components, file has {ncomp}",
            grid.dim()
        )));
    }
    let mut comps = Vec::with_capacity(ncomp as usize);
    for _ in 0..ncomp {
        comps.push(read_values(&mut f, grid.points())?);
    }
    VectorField::from_components(&grid, comps)
}

pub fn write_scalar_field(path: impl AsRef<Path>, s: &ScalarField) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_header(&mut f, s.grid(), 1)?;
    write_values(&mut f, s.values())
}

pub fn read_scalar_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let mut f = std::fs::File::open(path)?;
    let (grid, ncomp) = read_header(&mut f)?;
    if ncomp != 1 {
        return Err(Error::Format(format!("expected scalar file, has {ncomp} components")));
    }
    ScalarField::from_values(&grid, read_values(&mut f, grid.points())?)
}

/// CSV with per-axis index columns, node coordinates, then one column per
/// component. RFC-4180 line endings are left to the platform writer; fields
/// are plain numbers so no quoting is needed.
pub fn write_vector_csv(path: impl AsRef<Path>, u: &VectorField) -> Result<()> {
    let grid = u.grid();
    let dim = grid.dim();
    let mut out = String::new();
    for a in 0..dim {
        out.push_str(&format!("i{a},"));
    }
    for a in 0..dim {
        out.push_str(&format!("x{a},"));
    }
    let names: Vec<String> = (0..dim).map(|a| format!("u{a}")).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    grid.for_each_node(|p, idx| {
        let x = grid.node(&idx[..dim]);
        for a in 0..dim {
            out.push_str(&format!("{},", idx[a]));
        }
        for a in 0..dim {
            out.push_str(&format!("{:.17e},", x[a]));
        }
        let vals: Vec<String> = (0..dim).map(|a| format!("{:.17e}", u.component(a)[p])).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    });
    std::fs::write(path, out)?;
    Ok(())
}
