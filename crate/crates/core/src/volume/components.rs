use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::grid::{linear_index, unravel, BinaryMask, Dims, LabeledComponents};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [[i32; 3]] {
        match self {
            Connectivity::Six => &FACE_OFFSETS,
            Connectivity::TwentySix => &NEIGHBOR_OFFSETS_26,
        }
    }
}

pub const FACE_OFFSETS: [[i32; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

pub const NEIGHBOR_OFFSETS_26: [[i32; 3]; 26] = {
    let mut out = [[0i32; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dz == 0 && dy == 0 && dx == 0) {
                    out[n] = [dz, dy, dx];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// Neighbor of `p` at `off`, or `None` outside the grid.
#[inline]
pub(crate) fn step(dims: Dims, p: [usize; 3], off: [i32; 3]) -> Option<[usize; 3]> {
    let mut q = [0usize; 3];
    for a in 0..3 {
        let c = p[a] as i64 + off[a] as i64;
        if c < 0 || c >= dims[a] as i64 {
            return None;
        }
        q[a] = c as usize;
    }
    Some(q)
}

/// Labels foreground components. Labels are assigned in order of each
/// component's smallest linear voxel index, starting at 1.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledComponents {
    let dims = mask.dims();
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..bits.len() {
        if !bits[seed] || labels[seed] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[seed] = label;
        queue.push_back(seed);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = unravel(dims, i);
            for &off in connectivity.offsets() {
                if let Some([z, y, x]) = step(dims, p, off) {
                    let j = linear_index(dims, z, y, x);
                    if bits[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    LabeledComponents { dims, labels, sizes }
}

/// Drops components with fewer than `min_voxels` voxels.
pub fn remove_small_components(mask: &BinaryMask, min_voxels: usize, connectivity: Connectivity) -> BinaryMask {
    let cc = connected_components(mask, connectivity);
    let bits = cc
        .labels
        .iter()
        .map(|&l| l != 0 && cc.sizes[l as usize - 1] >= min_voxels)
        .collect();
    BinaryMask::new(mask.dims(), mask.spacing(), bits).expect("same length")
}

/// Euler characteristic of the union of closed voxel cubes, which is the
/// (26, 6) digital topology: vertices − edges + faces − cubes.
pub fn euler_characteristic(mask: &BinaryMask) -> i64 {
    let [nz, ny, nx] = mask.dims();
    let at = |z: i64, y: i64, x: i64| -> bool {
        z >= 0 && y >= 0 && x >= 0 && (z as usize) < nz && (y as usize) < ny && (x as usize) < nx && mask.get(z as usize, y as usize, x as usize)
    };
    let (mut v, mut e, mut f) = (0i64, 0i64, 0i64);
    for z in 0..=nz as i64 {
        for y in 0..=ny as i64 {
            for x in 0..=nx as i64 {
                // lattice point (z, y, x) touches voxels (z-1..z, y-1..y, x-1..x)
                let any = |dz: &[i64], dy: &[i64], dx: &[i64]| {
                    dz.iter().any(|&a| dy.iter().any(|&b| dx.iter().any(|&c| at(z + a, y + b, x + c))))
                };
                v += any(&[-1, 0], &[-1, 0], &[-1, 0]) as i64;
                // edges leaving the point in +z, +y, +x
                e += any(&[0], &[-1, 0], &[-1, 0]) as i64;
                e += any(&[-1, 0], &[0], &[-1, 0]) as i64;
                e += any(&[-1, 0], &[-1, 0], &[0]) as i64;
                // faces spanned from the point: yx, zx, zy planes
                f += any(&[-1, 0], &[0], &[0]) as i64;
                f += any(&[0], &[-1, 0], &[0]) as i64;
                f += any(&[0], &[0], &[-1, 0]) as i64;
            }
        }
    }
    v - e + f - mask.count() as i64
}

/// Betti numbers of a mask: components (26), tunnels, cavities (enclosed
/// 6-connected background pockets).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub components: usize,
    pub tunnels: usize,
    pub cavities: usize,
}

pub fn topology(mask: &BinaryMask) -> Topology {
    let dims = mask.dims();
    let components = connected_components(mask, Connectivity::TwentySix).count();
    let inverse = BinaryMask::new(dims, mask.spacing(), mask.bits().iter().map(|&b| !b).collect()).expect("same length");
    let bg = connected_components(&inverse, Connectivity::Six);
    let mut touches = vec![false; bg.count()];
    for (i, &l) in bg.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let p = unravel(dims, i);
        if (0..3).any(|a| p[a] == 0 || p[a] + 1 == dims[a]) {
            touches[l as usize - 1] = true;
        }
    }
    let cavities = touches.iter().filter(|&&t| !t).count();
    let chi = euler_characteristic(mask);
    let tunnels = (components as i64 + cavities as i64 - chi).max(0) as usize;
    Topology { components, tunnels, cavities }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Intersection,
    Union,
}

/// Combines the two coarse label sources voxelwise.
pub fn fuse_coarse_labels(a: &BinaryMask, b: &BinaryMask, mode: FusionMode) -> Result<BinaryMask> {
    a.check_same_dims(b.dims())?;
    let bits = a
        .bits()
        .iter()
        .zip(b.bits())
        .map(|(&p, &q)| match mode {
            FusionMode::Intersection => p && q,
            FusionMode::Union => p || q,
        })
        .collect();
    BinaryMask::new(a.dims(), a.spacing(), bits)
}
