//! Binary snapshots: `"NLKG1"`, u64 count, then little-endian f64
//! `x0, dx, u[0..n], u_t[0..n]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{FieldPair, Grid, ScalarField};

const MAGIC: &[u8; 5] = b"NLKG1";

pub fn write<W: Write>(mut w: W, state: &FieldPair) -> Result<()> {
    let g = state.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    w.write_all(&g.x0().to_le_bytes())?;
    w.write_all(&g.dx().to_le_bytes())?;
    for v in state.first.values().iter().chain(state.second.values()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<FieldPair> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut next = |r: &mut R| -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let x0 = next(&mut r)?;
    let dx = next(&mut r)?;
    let grid = Grid::new(n, dx * n as f64, x0)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let mut u = Vec::with_capacity(n);
    for _ in 0..n {
        u.push(next(&mut r)?);
    }
    let mut ut = Vec::with_capacity(n);
    for _ in 0..n {
        ut.push(next(&mut r)?);
    }
    FieldPair::new(ScalarField::new(&grid, u)?, ScalarField::new(&grid, ut)?)
}

pub fn save(path: impl AsRef<Path>, state: &FieldPair) -> Result<()> {
    write(BufWriter::new(File::create(path)?), state)
}

pub fn load(path: impl AsRef<Path>) -> Result<FieldPair> {
    read(BufReader::new(File::open(path)?))
}
