//! Sparse point annotations in the VESSEL12 `x, y, z, label` CSV layout.
//!
//! Coordinates are zero-based voxel indices; there is no header row.

use std::path::Path;

use super::grid::{linear_index, BinaryMask, Dims, Spacing};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledPoint {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    /// Linear index into the z-major grid.
    pub index: usize,
    pub vessel: bool,
}

pub fn parse_vessel12_points(text: &str, dims: Dims) -> Result<Vec<LabeledPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let mut v = [0i64; 4];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("{field:?} is not an integer"),
            })?;
        }
        let [x, y, z, label] = v;
        if label != 0 && label != 1 {
            return Err(Error::MalformedRow {
                row,
                message: format!("label {label} is not 0 or 1"),
            });
        }
        let inside = |c: i64, n: usize| c >= 0 && (c as u64) < n as u64;
        if !(inside(x, dims[2]) && inside(y, dims[1]) && inside(z, dims[0])) {
            return Err(Error::OutOfBounds { row, x, y, z, dims });
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        points.push(LabeledPoint {
            x,
            y,
            z,
            index: linear_index(dims, z, y, x),
            vessel: label == 1,
        });
    }
    Ok(points)
}

pub fn load_vessel12_points(path: &Path, dims: Dims) -> Result<Vec<LabeledPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vessel12_points(&text, dims)
}

/// Rasterizes the vessel-labeled points into a mask.
pub fn points_to_mask(points: &[LabeledPoint], dims: Dims, spacing: Spacing) -> BinaryMask {
    let mut mask = BinaryMask::empty(dims, spacing);
    for p in points.iter().filter(|p| p.vessel) {
        mask.bits_mut()[p.index] = true;
    }
    mask
}
