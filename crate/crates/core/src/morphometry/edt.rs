//! Exact separable Euclidean distance transform (lower envelope of parabolas)
//! under physical voxel spacing, with nearest-site tracking.

use crate::volume::{voxel_count, BinaryMask, Dims, Spacing};

/// Marks a virtual site outside the grid.
pub const OUTSIDE: usize = usize::MAX;

/// Squared distances and nearest-site indices for a set of sites.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTransform {
    pub dist2: Vec<f64>,
    /// Linear index of the nearest site; [`OUTSIDE`] for the virtual border
    /// or when no site exists.
    pub nearest: Vec<usize>,
}

/// One 1-D pass. `f[q]` are squared distances so far, `src[q]` their sites.
/// With `border`, virtual zero-cost sites sit at `-1` and `n`.
fn envelope_1d(f: &[f64], src: &[usize], w: f64, border: bool, out_d: &mut [f64], out_s: &mut [usize]) {
    let n = f.len();
    // (position, value, site) of finite parabolas, in position order
    let mut pos: Vec<i64> = Vec::with_capacity(n + 2);
    let mut val: Vec<f64> = Vec::with_capacity(n + 2);
    let mut site: Vec<usize> = Vec::with_capacity(n + 2);
    if border {
        pos.push(-1);
        val.push(0.0);
        site.push(OUTSIDE);
    }
    for q in 0..n {
        if f[q].is_finite() {
            pos.push(q as i64);
            val.push(f[q]);
            site.push(src[q]);
        }
    }
    if border {
        pos.push(n as i64);
        val.push(0.0);
        site.push(OUTSIDE);
    }
    if pos.is_empty() {
        out_d.iter_mut().for_each(|d| *d = f64::INFINITY);
        out_s.iter_mut().for_each(|s| *s = OUTSIDE);
        return;
    }
    let w2 = w * w;
    // intersection abscissa of parabolas i and j (i left of j), in index units
    let meet = |i: usize, j: usize| -> f64 {
        let (pi, pj) = (pos[i] as f64, pos[j] as f64);
        ((val[j] + w2 * pj * pj) - (val[i] + w2 * pi * pi)) / (2.0 * w2 * (pj - pi))
    };
    let mut v: Vec<usize> = vec![0];
    let mut z: Vec<f64> = vec![f64::NEG_INFINITY, f64::INFINITY];
    for j in 1..pos.len() {
        let mut s = meet(*v.last().unwrap(), j);
        while s <= z[v.len() - 1] {
            v.pop();
            z.pop();
            if v.is_empty() {
                break;
            }
            s = meet(*v.last().unwrap(), j);
        }
        if v.is_empty() {
            v.push(j);
            z.clear();
            z.push(f64::NEG_INFINITY);
            z.push(f64::INFINITY);
        } else {
            v.push(j);
            *z.last_mut().unwrap() = s;
            z.push(f64::INFINITY);
        }
    }
    let mut k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let i = v[k];
        let t = (q as i64 - pos[i]) as f64 * w;
        out_d[q] = t * t + val[i];
        out_s[q] = site[i];
    }
}

/// Runs the x, y, z passes in that order over a site indicator.
fn transform(dims: Dims, spacing: Spacing, is_site: &[bool], border: bool) -> FeatureTransform {
    let n = voxel_count(dims);
    let mut dist2: Vec<f64> = is_site.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut nearest: Vec<usize> = (0..n).map(|i| if is_site[i] { i } else { OUTSIDE }).collect();
    let [_, ny, nx] = dims;
    let w = [spacing.dz, spacing.dy, spacing.dx];
    let strides = [ny * nx, nx, 1];
    for axis in [2usize, 1, 0] {
        let len = dims[axis];
        let stride = strides[axis];
        let mut f = vec![0.0; len];
        let mut s = vec![0usize; len];
        let mut od = vec![0.0; len];
        let mut os = vec![0usize; len];
        let lines: Vec<usize> = (0..n).filter(|&i| (i / stride) % len == 0).collect();
        for base in lines {
            for q in 0..len {
                f[q] = dist2[base + q * stride];
                s[q] = nearest[base + q * stride];
            }
            envelope_1d(&f, &s, w[axis], border, &mut od, &mut os);
            for q in 0..len {
                dist2[base + q * stride] = od[q];
                nearest[base + q * stride] = os[q];
            }
        }
    }
    FeatureTransform { dist2, nearest }
}

/// Distance (mm) from each foreground voxel center to the nearest background
/// voxel center; space outside the grid counts as background. Background
/// voxels map to 0.
pub fn distance_map(mask: &BinaryMask) -> Vec<f64> {
    let background: Vec<bool> = mask.bits().iter().map(|&b| !b).collect();
    transform(mask.dims(), mask.spacing(), &background, true)
        .dist2
        .into_iter()
        .map(f64::sqrt)
        .collect()
}

/// Nearest site (by physical distance) for every voxel; no virtual border.
pub fn feature_transform(dims: Dims, spacing: Spacing, is_site: &[bool]) -> FeatureTransform {
    transform(dims, spacing, is_site, false)
}
