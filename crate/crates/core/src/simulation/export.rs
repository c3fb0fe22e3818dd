//! Batch export.
//!
//! CSV: header `path_id,t[,W],B,Z[,eta]`, one row per path node.
//!
//! Binary, all little-endian:
//!
//! ```text
//! b"GDRV1"
//! u64 n_paths, u64 n_nodes, u64 flags (bit 0: W present, bit 1: eta present)
//! f64 × n_nodes             grid times
//! f64 × n_paths·n_nodes     W (if flagged), then B, then Z, row-major by path
//! f64 × n_paths             eta (if flagged)
//! ```

use std::io::{Read, Write};

use super::PathBatch;
use crate::error::{domain, Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"GDRV1";

const FLAG_W: u64 = 1;
const FLAG_ETA: u64 = 2;

/// Columns of an exported batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchColumns {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub w: Option<Vec<f64>>,
    pub b: Vec<f64>,
    pub z: Vec<f64>,
    pub eta: Option<Vec<f64>>,
}

impl BatchColumns {
    pub fn from_batch(batch: &PathBatch, eta: Option<&[f64]>) -> Result<Self> {
        if let Some(e) = eta {
            if e.len() != batch.n_paths {
                return Err(domain(format!("{} weights for {} paths", e.len(), batch.n_paths)));
            }
        }
        Ok(Self {
            n_paths: batch.n_paths,
            times: batch.grid.times(),
            w: batch.wiener_values(),
            b: batch.centered.clone().unwrap_or_else(|| batch.values.clone()),
            z: batch.values.clone(),
            eta: eta.map(<[f64]>::to_vec),
        })
    }
}

pub fn write_csv(out: &mut impl Write, cols: &BatchColumns) -> Result<()> {
    let mut header = String::from("path_id,t");
    if cols.w.is_some() {
        header.push_str(",W");
    }
    header.push_str(",B,Z");
    if cols.eta.is_some() {
        header.push_str(",eta");
    }
    writeln!(out, "{header}")?;
    let n = cols.times.len();
    let mut line = String::new();
    for p in 0..cols.n_paths {
        for (i, t) in cols.times.iter().enumerate() {
            use std::fmt::Write as _;
            let k = p * n + i;
            line.clear();
            let _ = write!(line, "{p},{t}");
            if let Some(w) = &cols.w {
                let _ = write!(line, ",{}", w[k]);
            }
            let _ = write!(line, ",{},{}", cols.b[k], cols.z[k]);
            if let Some(e) = &cols.eta {
                let _ = write!(line, ",{}", e[p]);
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

fn put(out: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_binary(out: &mut impl Write, cols: &BatchColumns) -> Result<()> {
    let flags = if cols.w.is_some() { FLAG_W } else { 0 } | if cols.eta.is_some() { FLAG_ETA } else { 0 };
    out.write_all(BINARY_MAGIC)?;
    for v in [cols.n_paths as u64, cols.times.len() as u64, flags] {
        out.write_all(&v.to_le_bytes())?;
    }
    put(out, &cols.times)?;
    if let Some(w) = &cols.w {
        put(out, w)?;
    }
    put(out, &cols.b)?;
    put(out, &cols.z)?;
    if let Some(e) = &cols.eta {
        put(out, e)?;
    }
    Ok(())
}

fn take_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn take(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_binary(r: &mut impl Read) -> Result<BatchColumns> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Contract("not a GDRV1 file".into()));
    }
    let n_paths = take_u64(r)? as usize;
    let n_nodes = take_u64(r)? as usize;
    let flags = take_u64(r)?;
    let cells = n_paths
        .checked_mul(n_nodes)
        .ok_or_else(|| Error::Contract("header dimensions overflow".into()))?;
    let times = take(r, n_nodes)?;
    let w = if flags & FLAG_W != 0 { Some(take(r, cells)?) } else { None };
    let b = take(r, cells)?;
    let z = take(r, cells)?;
    let eta = if flags & FLAG_ETA != 0 { Some(take(r, n_paths)?) } else { None };
    Ok(BatchColumns { n_paths, times, w, b, z, eta })
}
