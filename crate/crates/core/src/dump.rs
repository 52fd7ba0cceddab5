//! Raw field dumps.
//!
//! A dump is a 32-byte header followed by the physical samples as
//! little-endian `f64`, row-major:
//!
//! | offset | size | content            |
//! |--------|------|--------------------|
//! | 0      | 4    | magic `SQGF`       |
//! | 4      | 4    | version, `u32` = 1 |
//! | 8      | 4    | `n`, `u32`         |
//! | 12     | 8    | `L`, `f64`         |
//! | 20     | 12   | zero padding       |
//!
//! Metadata goes to a sidecar JSON file with the same stem.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Grid, GridSpec};

pub const MAGIC: &[u8; 4] = b"SQGF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub grid: GridSpec,
    pub alpha: f64,
    pub time: f64,
    /// Wall-clock seconds since the Unix epoch when the dump was written.
    pub created_unix: u64,
}

/// Sidecar path for a dump: `foo.bin` → `foo.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode(field: &Field) -> Vec<u8> {
    let spec = field.spec();
    let values = field.values();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.n as u32).to_le_bytes());
    out.extend_from_slice(&spec.box_length.to_le_bytes());
    out.extend_from_slice(&[0u8; 12]);
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode a dump, returning the grid spec and physical samples.
pub fn decode(bytes: &[u8]) -> std::result::Result<(GridSpec, Vec<f64>), String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[0..4] != MAGIC {
        return Err("bad magic".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let spec = GridSpec::new(n, l).map_err(|e| e.to_string())?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * spec.len() {
        return Err(format!(
            "expected {} samples, found {} bytes",
            spec.len(),
            body.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((spec, values))
}

/// Write `field` to `path` and its metadata to the sidecar.
pub fn write_dump(path: &Path, field: &Field, alpha: f64, time: f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode(field))?;
    w.flush()?;
    let meta = DumpMeta {
        grid: *field.spec(),
        alpha,
        time,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Read a dump back onto a fresh grid. The sidecar is optional.
pub fn read_dump(path: &Path) -> Result<(Field, Option<DumpMeta>)> {
    let bytes = fs::read(path)?;
    let (spec, values) = decode(&bytes).map_err(|message| Error::BadDump {
        path: path.to_path_buf(),
        message,
    })?;
    let grid: Arc<Grid> = Grid::new(spec)?;
    let field = Field::from_physical(&grid, values)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        Some(serde_json::from_slice(&fs::read(side)?)?)
    } else {
        None
    };
    Ok((field, meta))
}
