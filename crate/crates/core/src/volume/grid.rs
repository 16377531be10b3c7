use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along (z, y, x).
pub type Dims = [usize; 3];

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

/// Linear index in z-major row-major order.
#[inline]
pub fn linear_index(dims: Dims, z: usize, y: usize, x: usize) -> usize {
    (z * dims[1] + y) * dims[2] + x
}

#[inline]
pub fn unravel(dims: Dims, idx: usize) -> [usize; 3] {
    let x = idx % dims[2];
    let rest = idx / dims[2];
    [rest / dims[1], rest % dims[1], x]
}

/// Millimeters per voxel along (z, y, x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dz: f64,
    pub dy: f64,
    pub dx: f64,
}

impl Spacing {
    pub fn new(dz: f64, dy: f64, dx: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(dz) && ok(dy) && ok(dx) {
            Ok(Spacing { dz, dy, dx })
        } else {
            Err(Error::InvalidSpacing(dz, dy, dx))
        }
    }

    pub fn isotropic(mm: f64) -> Result<Self> {
        Self::new(mm, mm, mm)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dz, self.dy, self.dx]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }

    /// Voxel volume in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.dz * self.dy * self.dx
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.dz * factor, self.dy * factor, self.dx * factor)
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing {
            dz: 1.0,
            dy: 1.0,
            dx: 1.0,
        }
    }
}

/// Scalar intensity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeGrid {
    dims: Dims,
    spacing: Spacing,
    voxels: Vec<f32>,
}

impl VolumeGrid {
    pub fn new(dims: Dims, spacing: Spacing, voxels: Vec<f32>) -> Result<Self> {
        let expected = voxel_count(dims);
        if voxels.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: voxels.len(),
            });
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("volume contains non-finite values".into()));
        }
        Ok(VolumeGrid {
            dims,
            spacing,
            voxels,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Self {
        VolumeGrid {
            dims,
            spacing,
            voxels: vec![value; voxel_count(dims)],
        }
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut voxels = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    voxels.push(f(z, y, x));
                }
            }
        }
        VolumeGrid {
            dims,
            spacing,
            voxels,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f32] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.voxels[linear_index(self.dims, z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: f32) {
        let i = linear_index(self.dims, z, y, x);
        self.voxels[i] = v;
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Binary vessel labels; `true` marks vessel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    spacing: Spacing,
    bits: Vec<bool>,
}

// Spacing holds finite positive floats only.
impl Eq for Spacing {}

impl BinaryMask {
    pub fn new(dims: Dims, spacing: Spacing, bits: Vec<bool>) -> Result<Self> {
        let expected = voxel_count(dims);
        if bits.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: bits.len(),
            });
        }
        Ok(BinaryMask { dims, spacing, bits })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        BinaryMask {
            dims,
            spacing,
            bits: vec![false; voxel_count(dims)],
        }
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    bits.push(f(z, y, x));
                }
            }
        }
        BinaryMask { dims, spacing, bits }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.bits[linear_index(self.dims, z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: bool) {
        let i = linear_index(self.dims, z, y, x);
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn check_same_dims(&self, other_dims: Dims) -> Result<()> {
        if self.dims != other_dims {
            return Err(Error::DimsMismatch {
                left: self.dims,
                right: other_dims,
            });
        }
        Ok(())
    }
}

/// Connected-component labeling result. Label 0 is background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledComponents {
    pub dims: Dims,
    pub labels: Vec<u32>,
    /// `sizes[l - 1]` is the voxel count of component `l`.
    pub sizes: Vec<usize>,
}

impl LabeledComponents {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}
