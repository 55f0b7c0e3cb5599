//! Deterministic, diff-friendly artifact I/O.
//!
//! Fields and measures travel as CSV with a fixed header (`x,value`,
//! `x1,x2,value`, `x,weight`, `i,j,mass`); diagnostics travel as pretty JSON.
//! Every artifact starts with a `#` comment line carrying the library
//! version and the configuration hash, so a run can be traced back to its
//! inputs. Readers skip comment lines. Floats are written with the shortest
//! round-trip representation, which makes repeated runs byte-identical.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field1d, Field2d, Grid1d, Grid2d};
use crate::lp::{LpPotentials, TransportPlan};
use crate::measures::DiscreteMeasure;

/// Provenance stamp embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct ArtifactMeta {
    pub version: String,
    pub config_hash: String,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.into(),
        }
    }

    fn comment(&self) -> String {
        format!("# qot-core/{} config-hash={}\n", self.version, self.config_hash)
    }
}

pub fn field1_csv_bytes(f: &Field1d, meta: &ArtifactMeta) -> Vec<u8> {
    let mut out = meta.comment();
    out.push_str("x,value\n");
    for (x, v) in f.grid.centers.iter().zip(&f.values) {
        out.push_str(&format!("{x},{v}\n"));
    }
    out.into_bytes()
}

pub fn field2_csv_bytes(f: &Field2d, meta: &ArtifactMeta) -> Vec<u8> {
    let mut out = meta.comment();
    out.push_str("x1,x2,value\n");
    let ny = f.grid.y.n;
    for (idx, v) in f.values.iter().enumerate() {
        let x1 = f.grid.x.centers[idx / ny];
        let x2 = f.grid.y.centers[idx % ny];
        out.push_str(&format!("{x1},{x2},{v}\n"));
    }
    out.into_bytes()
}

pub fn measure_csv_bytes(m: &DiscreteMeasure, meta: &ArtifactMeta) -> Vec<u8> {
    let mut out = meta.comment();
    out.push_str("x,weight\n");
    for (x, w) in m.grid.centers.iter().zip(&m.weights) {
        out.push_str(&format!("{x},{w}\n"));
    }
    out.into_bytes()
}

pub fn sparse_plan_csv_bytes(p: &TransportPlan, meta: &ArtifactMeta) -> Vec<u8> {
    let mut out = meta.comment();
    out.push_str("i,j,mass\n");
    for &(i, j, w) in &p.entries {
        out.push_str(&format!("{i},{j},{w}\n"));
    }
    out.into_bytes()
}

pub fn potentials_csv_bytes(p: &LpPotentials, meta: &ArtifactMeta) -> Vec<u8> {
    let mut out = meta.comment();
    out.push_str("side,index,value\n");
    for (i, v) in p.phi.iter().enumerate() {
        out.push_str(&format!("phi,{i},{v}\n"));
    }
    for (j, v) in p.psi.iter().enumerate() {
        out.push_str(&format!("psi,{j},{v}\n"));
    }
    out.into_bytes()
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn data_rows(path: &Path, expect_header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != expect_header {
                return Err(Error::Csv {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected header '{expect_header}', got '{line}'"),
                });
            }
            header_seen = true;
            continue;
        }
        rows.push((
            lineno + 1,
            line.split(',').map(|s| s.trim().to_string()).collect(),
        ));
    }
    if !header_seen {
        return Err(Error::Csv {
            path: path.display().to_string(),
            line: 0,
            msg: format!("missing header '{expect_header}'"),
        });
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Csv {
        path: path.display().to_string(),
        line,
        msg: format!("bad number '{s}': {e}"),
    })
}

fn check_center(path: &Path, line: usize, x: f64, grid: &Grid1d, row: usize) -> Result<()> {
    let expected = grid.centers[row];
    if (x - expected).abs() > 1e-8 * grid.h.max(1.0) {
        return Err(Error::Csv {
            path: path.display().to_string(),
            line,
            msg: format!("coordinate {x} does not match cell center {expected}"),
        });
    }
    Ok(())
}

/// Read a 1d field CSV (`x,value`), validating the coordinates against the
/// given grid's cell centers in order.
pub fn read_field1(path: &Path, grid: &Grid1d) -> Result<Field1d> {
    let rows = data_rows(path, "x,value")?;
    if rows.len() != grid.n {
        return Err(Error::Csv {
            path: path.display().to_string(),
            line: 0,
            msg: format!("expected {} rows, got {}", grid.n, rows.len()),
        });
    }
    let mut values = Vec::with_capacity(grid.n);
    for (row_idx, (lineno, cells)) in rows.iter().enumerate() {
        if cells.len() != 2 {
            return Err(Error::Csv {
                path: path.display().to_string(),
                line: *lineno,
                msg: "expected two columns".into(),
            });
        }
        let x = parse_f64(path, *lineno, &cells[0])?;
        check_center(path, *lineno, x, grid, row_idx)?;
        values.push(parse_f64(path, *lineno, &cells[1])?);
    }
    Field1d::new(grid.clone(), values)
}

/// Read a 2d field CSV (`x1,x2,value`) in row-major cell order.
pub fn read_field2(path: &Path, grid: &Grid2d) -> Result<Field2d> {
    let rows = data_rows(path, "x1,x2,value")?;
    if rows.len() != grid.cell_count() {
        return Err(Error::Csv {
            path: path.display().to_string(),
            line: 0,
            msg: format!("expected {} rows, got {}", grid.cell_count(), rows.len()),
        });
    }
    let ny = grid.y.n;
    let mut values = Vec::with_capacity(rows.len());
    for (idx, (lineno, cells)) in rows.iter().enumerate() {
        if cells.len() != 3 {
            return Err(Error::Csv {
                path: path.display().to_string(),
                line: *lineno,
                msg: "expected three columns".into(),
            });
        }
        let x1 = parse_f64(path, *lineno, &cells[0])?;
        let x2 = parse_f64(path, *lineno, &cells[1])?;
        check_center(path, *lineno, x1, &grid.x, idx / ny)?;
        check_center(path, *lineno, x2, &grid.y, idx % ny)?;
        values.push(parse_f64(path, *lineno, &cells[2])?);
    }
    Field2d::new(grid.clone(), values)
}

/// Read a measure CSV (`x,weight`) against the given grid.
pub fn read_measure(path: &Path, grid: &Grid1d) -> Result<DiscreteMeasure> {
    let rows = data_rows(path, "x,weight")?;
    if rows.len() != grid.n {
        return Err(Error::Csv {
            path: path.display().to_string(),
            line: 0,
            msg: format!("expected {} rows, got {}", grid.n, rows.len()),
        });
    }
    let mut weights = Vec::with_capacity(grid.n);
    for (row_idx, (lineno, cells)) in rows.iter().enumerate() {
        if cells.len() != 2 {
            return Err(Error::Csv {
                path: path.display().to_string(),
                line: *lineno,
                msg: "expected two columns".into(),
            });
        }
        let x = parse_f64(path, *lineno, &cells[0])?;
        check_center(path, *lineno, x, grid, row_idx)?;
        weights.push(parse_f64(path, *lineno, &cells[1])?);
    }
    DiscreteMeasure::new(grid.clone(), weights)
}
