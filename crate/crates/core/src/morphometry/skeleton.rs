//! Topology-preserving thinning to a one-voxel centerline.
//!
//! Six directional sub-iterations (−z, +z, −y, +y, −x, +x). In each, border
//! voxels of that direction that are simple and not endpoints become
//! candidates. Candidates are then re-checked for simplicity and deleted one
//! at a time, visiting the eight parity subfields in turn (raster order
//! within each), so every deletion removes a simple point of the current
//! image. Endpoint status is fixed at candidate time; re-checking it during
//! the sweep leaves one-voxel spurs. Sub-iterations repeat until nothing
//! changes.

use crate::volume::{linear_index, unravel, BinaryMask, Dims, Spacing, FACE_OFFSETS, NEIGHBOR_OFFSETS_26};

use super::edt::distance_map;

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    pub dims: Dims,
    pub spacing: Spacing,
    /// Skeleton voxels in raster order.
    pub voxels: Vec<[usize; 3]>,
    /// 26-neighbors of each skeleton voxel, as indices into `voxels`.
    pub adjacency: Vec<Vec<usize>>,
    /// Distance-map radius (mm) at each skeleton voxel.
    pub radius_mm: Vec<f64>,
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::empty(self.dims, self.spacing);
        for &[z, y, x] in &self.voxels {
            m.set(z, y, x, true);
        }
        m
    }

    /// Builds the adjacency structure for an arbitrary voxel set with the
    /// given per-voxel radii lookup.
    pub(crate) fn from_mask(mask: &BinaryMask, radius_lookup: &[f64]) -> Skeleton {
        let dims = mask.dims();
        let mut slot = vec![usize::MAX; mask.len()];
        let mut voxels = Vec::new();
        for (i, &b) in mask.bits().iter().enumerate() {
            if b {
                slot[i] = voxels.len();
                voxels.push(unravel(dims, i));
            }
        }
        let adjacency = voxels
            .iter()
            .map(|&p| {
                NEIGHBOR_OFFSETS_26
                    .iter()
                    .filter_map(|&off| crate::volume::step(dims, p, off))
                    .map(|q| slot[linear_index(dims, q[0], q[1], q[2])])
                    .filter(|&s| s != usize::MAX)
                    .collect()
            })
            .collect();
        let radius_mm = voxels
            .iter()
            .map(|p| radius_lookup[linear_index(dims, p[0], p[1], p[2])])
            .collect();
        Skeleton {
            dims,
            spacing: mask.spacing(),
            voxels,
            adjacency,
            radius_mm,
        }
    }
}

/// 3×3×3 neighborhood as bits; index `(dz+1)*9 + (dy+1)*3 + (dx+1)`.
fn neighborhood(bits: &[bool], dims: Dims, p: [usize; 3]) -> [bool; 27] {
    let mut n = [false; 27];
    for dz in 0..3 {
        for dy in 0..3 {
            for dx in 0..3 {
                let z = p[0] as i64 + dz as i64 - 1;
                let y = p[1] as i64 + dy as i64 - 1;
                let x = p[2] as i64 + dx as i64 - 1;
                if z >= 0 && y >= 0 && x >= 0 && (z as usize) < dims[0] && (y as usize) < dims[1] && (x as usize) < dims[2] {
                    n[dz * 9 + dy * 3 + dx] = bits[linear_index(dims, z as usize, y as usize, x as usize)];
                }
            }
        }
    }
    n
}

const CENTER: usize = 13;

fn coords(i: usize) -> [i32; 3] {
    [(i / 9) as i32 - 1, ((i / 3) % 3) as i32 - 1, (i % 3) as i32 - 1]
}

struct Tables {
    adj26: [u32; 27],
    adj6: [u32; 27],
    faces: u32,
    n18: u32,
}

fn tables() -> &'static Tables {
    static T: std::sync::OnceLock<Tables> = std::sync::OnceLock::new();
    T.get_or_init(|| {
        let mut t = Tables { adj26: [0; 27], adj6: [0; 27], faces: 0, n18: 0 };
        for a in 0..27 {
            let ca = coords(a);
            let l1: i32 = ca.iter().map(|c| c.abs()).sum();
            if l1 == 1 {
                t.faces |= 1 << a;
            }
            if (1..=2).contains(&l1) {
                t.n18 |= 1 << a;
            }
            for b in 0..27 {
                let cb = coords(b);
                let d: Vec<i32> = (0..3).map(|k| (ca[k] - cb[k]).abs()).collect();
                if a == b || d.iter().any(|&v| v > 1) {
                    continue;
                }
                t.adj26[a] |= 1 << b;
                if d.iter().sum::<i32>() == 1 {
                    t.adj6[a] |= 1 << b;
                }
            }
        }
        t
    })
}

/// Flood fill from the lowest set bit of `set`, restricted to `set`.
fn flood(set: u32, adj: &[u32; 27]) -> u32 {
    let mut comp = set & set.wrapping_neg();
    loop {
        let mut grown = comp;
        let mut rest = comp;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            grown |= adj[i] & set;
        }
        if grown == comp {
            return comp;
        }
        comp = grown;
    }
}

/// Simple point under 26-connected foreground / 6-connected background.
pub(crate) fn is_simple(n: &[bool; 27]) -> bool {
    let t = tables();
    let mut bits = 0u32;
    for (i, &b) in n.iter().enumerate() {
        if b {
            bits |= 1 << i;
        }
    }
    let fg = bits & !(1 << CENTER);
    if fg == 0 || flood(fg, &t.adj26) != fg {
        return false;
    }
    // background 6-components within N18 that touch a face neighbor
    let mut bg = !bits & t.n18;
    let mut touching = 0;
    while bg != 0 {
        let comp = flood(bg, &t.adj6);
        if comp & t.faces != 0 {
            touching += 1;
        }
        bg &= !comp;
    }
    touching == 1
}

fn foreground_neighbors(n: &[bool; 27]) -> usize {
    (0..27).filter(|&i| i != CENTER && n[i]).count()
}

fn removable(bits: &[bool], dims: Dims, p: [usize; 3]) -> bool {
    let n = neighborhood(bits, dims, p);
    foreground_neighbors(&n) > 1 && is_simple(&n)
}

/// Thins `mask` to its centerline; radii come from the distance map.
pub fn skeletonize(mask: &BinaryMask) -> Skeleton {
    let dims = mask.dims();
    let mut bits = mask.bits().to_vec();
    let mut fg: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
    loop {
        let mut changed = false;
        for off in FACE_OFFSETS {
            let candidates: Vec<usize> = fg
                .iter()
                .copied()
                .filter(|&i| {
                    let p = unravel(dims, i);
                    let border = match crate::volume::step(dims, p, off) {
                        Some(q) => !bits[linear_index(dims, q[0], q[1], q[2])],
                        None => true,
                    };
                    border && removable(&bits, dims, p)
                })
                .collect();
            // parity subfields: no two voxels of one subfield are adjacent,
            // so deletions cannot cascade along the object
            for field in 0..8 {
                for &i in &candidates {
                    let p = unravel(dims, i);
                    if (p[0] % 2) * 4 + (p[1] % 2) * 2 + p[2] % 2 != field {
                        continue;
                    }
                    if is_simple(&neighborhood(&bits, dims, p)) {
                        bits[i] = false;
                        changed = true;
                    }
                }
            }
            fg.retain(|&i| bits[i]);
        }
        if !changed {
            break;
        }
    }
    let thinned = BinaryMask::new(dims, mask.spacing(), bits).expect("same dims");
    let radii = distance_map(mask);
    Skeleton::from_mask(&thinned, &radii)
}
