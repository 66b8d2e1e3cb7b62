//! Solution files.
//!
//! The binary layout is little-endian throughout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `MFGLAB01` |
//! | 4     | `dim` (u32) |
//! | 4     | `n` (u32) |
//! | 4     | `nt` (u32) |
//! | 8     | `T` (f64) |
//! | 8·(nt+1)·nᵈ | `u` slices `k = 0..=nt`, each in flat node order |
//! | 8·(nt+1)·nᵈ | `m` slices, same order |
//!
//! Flat node order runs axis 0 fastest.

use std::io::{Read, Write};

use crate::error::{MfgError, Result};
use crate::grid::{Field, SpaceTimeField, TorusGrid};

pub const MAGIC: &[u8; 8] = b"MFGLAB01";

pub fn write_solution(mut w: impl Write, u: &SpaceTimeField, m: &SpaceTimeField) -> Result<()> {
    let grid = *u.grid();
    if *m.grid() != grid {
        return Err(MfgError::GridMismatch);
    }
    w.write_all(MAGIC)?;
    for v in [grid.dim(), grid.n(), grid.nt()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&grid.t_final().to_le_bytes())?;
    for f in [u, m] {
        for s in f.slices() {
            for v in s.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads `(u, m)` written by [`write_solution`].
pub fn read_solution(mut r: impl Read) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(MfgError::Format("not a solution file (bad magic)".into()));
    }
    let dim = read_u32(&mut r)? as usize;
    let n = read_u32(&mut r)? as usize;
    let nt = read_u32(&mut r)? as usize;
    let t_final = read_f64(&mut r)?;
    let grid = TorusGrid::new(dim, n, t_final, nt)?;
    let mut read_field = || -> Result<SpaceTimeField> {
        let mut slices = Vec::with_capacity(nt + 1);
        for _ in 0..=nt {
            let values = (0..grid.len()).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            slices.push(Field::new(grid, values)?);
        }
        SpaceTimeField::new(grid, slices)
    };
    let u = read_field()?;
    let m = read_field()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(MfgError::Format("trailing bytes after solution data".into()));
    }
    Ok((u, m))
}

/// Round-trip float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV row per time slice: `t` followed by the node values in flat order.
pub fn write_field_csv(mut w: impl Write, f: &SpaceTimeField) -> Result<()> {
    let grid = f.grid();
    write!(w, "t")?;
    for j in 0..grid.len() {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for (k, s) in f.slices().iter().enumerate() {
        write!(w, "{}", fmt_f64(grid.time(k)))?;
        for v in s.values() {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
