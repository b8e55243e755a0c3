//! Density snapshots: a flat little-endian `f64` file laid out row-major with
//! shape `(n_w, n_v)`, next to a TOML sidecar holding the grid and time.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::density::Density;
use super::grid::Grid2D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub layout: String,
    pub t: f64,
    pub grid: Grid2D,
}

const LAYOUT: &str = "row-major (n_w, n_v), float64 little-endian";

/// Sidecar path for a snapshot file (`x.bin` -> `x.toml`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

pub fn write_density_bin(path: &Path, g: &Grid2D, d: &Density) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * d.mu.len());
    for x in &d.mu {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let meta = SnapshotMeta {
        layout: LAYOUT.to_string(),
        t: d.t,
        grid: *g,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_density_bin(path: &Path) -> Result<(Grid2D, Density)> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let meta: SnapshotMeta = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let bytes = fs::read(path)?;
    let g = meta.grid;
    if bytes.len() != 8 * g.len() {
        return Err(Error::Config(format!(
            "{} holds {} bytes, expected {} for a {} x {} grid",
            path.display(),
            bytes.len(),
            8 * g.len(),
            g.n_w,
            g.n_v
        )));
    }
    let mu = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((g, Density { mu, t: meta.t }))
}

/// CSV export with header `v,w,mu`, one row per cell.
pub fn write_density_csv(path: &Path, g: &Grid2D, d: &Density) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "v,w,mu")?;
    for j in 0..g.n_w {
        for i in 0..g.n_v {
            writeln!(out, "{},{},{}", g.v(i), g.w(j), d.at(g, i, j))?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvm::density::discretize_initial;
    use crate::fvm::grid::{build_grid, GridSpec};
    use crate::model::ModelParams;
    use crate::particle::InitialCondition;

    #[test]
    fn binary_round_trip() {
        let p = ModelParams::preset("cv_test").unwrap();
        let g = build_grid(&p, &GridSpec::for_preset("cv_test", 30, 25).unwrap()).unwrap().0;
        let mut d = discretize_initial(&InitialCondition::STANDARD, &g).unwrap();
        d.t = 1.25;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mu.bin");
        write_density_bin(&path, &g, &d).unwrap();
        let (g2, d2) = read_density_bin(&path).unwrap();
        assert_eq!(g, g2);
        assert_eq!(d, d2);
        // row-major (n_w, n_v): the second value is cell (1, 0)
        let raw = fs::read(&path).unwrap();
        let second = f64::from_le_bytes(raw[8..16].try_into().unwrap());
        assert_eq!(second, d.at(&g, 1, 0));

        let csv = dir.path().join("mu.csv");
        write_density_csv(&csv, &g, &d).unwrap();
        let text = fs::read_to_string(csv).unwrap();
        assert!(text.starts_with("v,w,mu\n"));
        assert_eq!(text.lines().count(), 1 + g.len());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = ModelParams::preset("cv_test").unwrap();
        let g = build_grid(&p, &GridSpec::for_preset("cv_test", 10, 10).unwrap()).unwrap().0;
        let d = Density::zeros(&g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mu.bin");
        write_density_bin(&path, &g, &d).unwrap();
        fs::write(&path, [0u8; 16]).unwrap();
        assert!(read_density_bin(&path).is_err());
    }
}
