//! Snapshot files: CSV `x,value` plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{CdfGrid, Grid, GridDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotKind {
    Density,
    Cdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub x0: f64,
    pub h: f64,
    pub n: usize,
    pub kind: SnapshotKind,
    pub mass: f64,
    pub time: Option<f64>,
}

/// Sidecar path: `foo.csv` -> `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_grid_csv(path: &Path, grid: Grid, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([format!("{}", grid.node(i)), format!("{v}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density(path: &Path, m: &GridDensity, time: Option<f64>) -> Result<()> {
    write_grid_csv(path, m.grid(), m.values())?;
    let meta =
        SnapshotMeta { x0: m.x0(), h: m.h(), n: m.len(), kind: SnapshotKind::Density, mass: m.total_mass(), time };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn write_cdf(path: &Path, u: &CdfGrid, time: Option<f64>) -> Result<()> {
    write_grid_csv(path, u.grid(), u.values())?;
    let mass = u.values()[u.len() - 1] - u.values()[0];
    let meta = SnapshotMeta { x0: u.x0(), h: u.h(), n: u.len(), kind: SnapshotKind::Cdf, mass, time };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn read_values(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "value"] {
        return Err(LabError::Config(format!("{}: expected header x,value", path.display())));
    }
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| LabError::Config(format!("{}: bad number on line {}", path.display(), line + 2)))
        };
        xs.push(parse(0)?);
        vs.push(parse(1)?);
    }
    Ok((xs, vs))
}

/// Reads a snapshot, preferring the sidecar's grid geometry when present.
pub fn read_snapshot(path: &Path) -> Result<(Grid, Vec<f64>, Option<SnapshotMeta>)> {
    let (xs, vs) = read_values(path)?;
    let side = sidecar_path(path);
    let meta: Option<SnapshotMeta> =
        if side.exists() { Some(serde_json::from_str(&fs::read_to_string(side)?)?) } else { None };
    let grid = match &meta {
        Some(m) => Grid::new(m.x0, m.h, vs.len())?,
        None => {
            if xs.len() < 2 {
                return Err(LabError::InvalidGrid("fewer than two rows".into()));
            }
            Grid::new(xs[0], xs[1] - xs[0], vs.len())?
        }
    };
    Ok((grid, vs, meta))
}

pub fn read_density(path: &Path) -> Result<GridDensity> {
    let (grid, vs, _) = read_snapshot(path)?;
    GridDensity::on_grid(grid, vs, false)
}

pub fn read_cdf(path: &Path) -> Result<CdfGrid> {
    let (grid, vs, _) = read_snapshot(path)?;
    CdfGrid::on_grid(grid, vs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let grid = Grid::covering(-1.0, 1.0, 0.1).unwrap();
        let m = GridDensity::from_fn(grid, |x| 1.0 - x.abs(), true).unwrap();
        write_density(&path, &m, Some(0.5)).unwrap();
        let back = read_density(&path).unwrap();
        assert_eq!(back.values(), m.values());
        let (_, _, meta) = read_snapshot(&path).unwrap();
        let meta = meta.unwrap();
        assert_eq!(meta.kind, SnapshotKind::Density);
        assert_eq!(meta.time, Some(0.5));
    }
}
