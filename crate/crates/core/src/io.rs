//! Flat little-endian `f64` dumps with a JSON sidecar header.
//!
//! `<stem>.bin` holds the raw samples, `<stem>.json` the [`GridHeader`].

use crate::error::{Error, Result};
use crate::grid::{Boundary, GridDomain, GridFunction};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub boundary: Boundary,
    /// Array shape when the payload is not a single grid function
    /// (e.g. `[rows, cols]` for an eigenvector matrix, column-major).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    /// Free-form extras such as slice heights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heights: Option<Vec<f64>>,
}

impl GridHeader {
    pub fn for_domain(domain: &GridDomain) -> Self {
        Self {
            dim: domain.dim(),
            half_width: domain.half_width(),
            points: domain.points_per_axis(),
            boundary: domain.boundary(),
            shape: None,
            heights: None,
        }
    }

    pub fn domain(&self) -> Result<GridDomain> {
        GridDomain::new(self.dim, self.half_width, self.points, self.boundary)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn write_array(stem: &Path, header: &GridHeader, data: &[f64]) -> Result<()> {
    let (bin, json) = paths(stem);
    if let Some(dir) = bin.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_string_pretty(header)?)?;
    Ok(())
}

pub fn read_array(stem: &Path) -> Result<(GridHeader, Vec<f64>)> {
    let (bin, json) = paths(stem);
    let header: GridHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bytes = fs::read(bin)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Config(format!(
            "{}: length {} is not a multiple of 8",
            stem.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, data))
}

pub fn write_grid(stem: &Path, f: &GridFunction) -> Result<()> {
    write_array(stem, &GridHeader::for_domain(f.domain()), f.values())
}

pub fn read_grid(stem: &Path) -> Result<GridFunction> {
    let (header, data) = read_array(stem)?;
    GridFunction::new(header.domain()?, data)
}
