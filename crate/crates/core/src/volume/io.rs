//! `.vvol.json` + `.vvol.raw` file pairs.
//!
//! The header is a small JSON record; the payload is a flat little-endian
//! array of `nz * ny * nx` values in z-major row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{voxel_count, BinaryMask, Dims, Spacing, VolumeGrid};
use crate::error::{Error, Result};

pub const HEADER_SUFFIX: &str = ".vvol.json";
pub const RAW_SUFFIX: &str = ".vvol.raw";
const ORDER: &str = "zyx-row-major";
const ENDIANNESS: &str = "little";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: Dtype,
    pub order: String,
    pub endianness: String,
}

/// Resolves `foo`, `foo.vvol.json` or `foo.vvol.raw` into the (header, raw) pair.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let base = s
        .strip_suffix(HEADER_SUFFIX)
        .or_else(|| s.strip_suffix(RAW_SUFFIX))
        .unwrap_or(&s)
        .to_string();
    (
        PathBuf::from(format!("{base}{HEADER_SUFFIX}")),
        PathBuf::from(format!("{base}{RAW_SUFFIX}")),
    )
}

/// Anything that can be written as a volume file pair.
pub trait VolumeData {
    fn dims(&self) -> Dims;
    fn spacing(&self) -> Spacing;
    fn dtype(&self) -> Dtype;
    fn payload(&self) -> Vec<u8>;
}

impl VolumeData for VolumeGrid {
    fn dims(&self) -> Dims {
        VolumeGrid::dims(self)
    }
    fn spacing(&self) -> Spacing {
        VolumeGrid::spacing(self)
    }
    fn dtype(&self) -> Dtype {
        Dtype::F32
    }
    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 4);
        for v in self.voxels() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

impl VolumeData for BinaryMask {
    fn dims(&self) -> Dims {
        BinaryMask::dims(self)
    }
    fn spacing(&self) -> Spacing {
        BinaryMask::spacing(self)
    }
    fn dtype(&self) -> Dtype {
        Dtype::U8
    }
    fn payload(&self) -> Vec<u8> {
        self.bits().iter().map(|&b| b as u8).collect()
    }
}

pub fn save_volume<V: VolumeData + ?Sized>(data: &V, path: &Path) -> Result<()> {
    let (header_path, raw_path) = volume_paths(path);
    if let Some(parent) = header_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let header = VolumeHeader {
        dims: data.dims(),
        spacing_mm: data.spacing().as_array(),
        dtype: data.dtype(),
        order: ORDER.to_string(),
        endianness: ENDIANNESS.to_string(),
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))?;
    fs::write(&raw_path, data.payload()).map_err(|e| Error::io(&raw_path, e))?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let (header_path, _) = volume_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: header_path.clone(),
        message: e.to_string(),
    })?;
    let bad = |message: String| Error::Header {
        path: header_path.clone(),
        message,
    };
    if header.order != ORDER {
        return Err(bad(format!("unsupported order {:?}", header.order)));
    }
    if header.endianness != ENDIANNESS {
        return Err(bad(format!("unsupported endianness {:?}", header.endianness)));
    }
    if header.dims.iter().any(|&d| d == 0) {
        return Err(bad(format!("zero-sized dims {:?}", header.dims)));
    }
    Spacing::from_array(header.spacing_mm)?;
    Ok(header)
}

fn read_payload(path: &Path, header: &VolumeHeader) -> Result<Vec<u8>> {
    let (_, raw_path) = volume_paths(path);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let width = header.dtype.width();
    let expected = voxel_count(header.dims);
    if bytes.len() % width != 0 || bytes.len() / width != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len() / width,
        });
    }
    Ok(bytes)
}

/// Loads an intensity grid. `u8` payloads are widened to `f32`.
pub fn load_volume(path: &Path) -> Result<VolumeGrid> {
    let header = read_header(path)?;
    let bytes = read_payload(path, &header)?;
    let spacing = Spacing::from_array(header.spacing_mm)?;
    let voxels = match header.dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::U8 => bytes.iter().map(|&b| b as f32).collect(),
    };
    VolumeGrid::new(header.dims, spacing, voxels)
}

/// Loads a binary mask; the payload must be `u8` holding only 0 and 1.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let header = read_header(path)?;
    let (header_path, _) = volume_paths(path);
    if header.dtype != Dtype::U8 {
        return Err(Error::Header {
            path: header_path,
            message: "mask files must have dtype u8".into(),
        });
    }
    let bytes = read_payload(path, &header)?;
    if let Some(pos) = bytes.iter().position(|&b| b > 1) {
        return Err(Error::Header {
            path: header_path,
            message: format!("mask value {} at voxel {pos} is not 0/1", bytes[pos]),
        });
    }
    let spacing = Spacing::from_array(header.spacing_mm)?;
    BinaryMask::new(header.dims, spacing, bytes.iter().map(|&b| b == 1).collect())
}
