use super::grid::{linear_index, BinaryMask, Dims, Spacing, VolumeGrid};
use crate::error::{Error, Result};

fn resampled_dims(dims: Dims, from: Spacing, to: Spacing) -> Result<Dims> {
    let src = from.as_array();
    let dst = to.as_array();
    let mut out = [0usize; 3];
    for a in 0..3 {
        let n = (dims[a] as f64 * src[a] / dst[a]).round();
        if !n.is_finite() || n > (1u64 << 31) as f64 {
            return Err(Error::DegenerateResample(out));
        }
        out[a] = (n as usize).max(1);
    }
    if out.iter().product::<usize>() == 0 {
        return Err(Error::DegenerateResample(out));
    }
    Ok(out)
}

/// Source-grid coordinate along one axis for every output index.
fn source_coords(n_out: usize, n_in: usize, from: f64, to: f64) -> Vec<f64> {
    (0..n_out)
        .map(|j| (j as f64 * to / from).clamp(0.0, (n_in - 1) as f64))
        .collect()
}

fn split(c: f64, n: usize) -> (usize, usize, f64) {
    let lo = c.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    (lo, hi, c - lo as f64)
}

/// Trilinear interpolation at continuous source coordinates `(z, y, x)`.
/// Coordinates must already lie within the grid.
pub(crate) fn trilinear_at(grid: &VolumeGrid, c: [f64; 3]) -> f64 {
    let dims = grid.dims();
    let v = grid.voxels();
    let (z0, z1, tz) = split(c[0], dims[0]);
    let (y0, y1, ty) = split(c[1], dims[1]);
    let (x0, x1, tx) = split(c[2], dims[2]);
    let at = |z, y, x| v[linear_index(dims, z, y, x)] as f64;
    let lerp = |a: f64, b: f64, t: f64| a * (1.0 - t) + b * t;
    let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), tx);
    let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), tx);
    let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), tx);
    let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), tx);
    lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz)
}

/// Resamples intensities to a new voxel spacing. Voxel centers sit at
/// `index * spacing`, so the origin voxel is shared by both grids.
pub fn resample_trilinear(grid: &VolumeGrid, target: Spacing) -> Result<VolumeGrid> {
    let dims = grid.dims();
    let out_dims = resampled_dims(dims, grid.spacing(), target)?;
    let (src, dst) = (grid.spacing().as_array(), target.as_array());
    let cz = source_coords(out_dims[0], dims[0], src[0], dst[0]);
    let cy = source_coords(out_dims[1], dims[1], src[1], dst[1]);
    let cx = source_coords(out_dims[2], dims[2], src[2], dst[2]);
    Ok(VolumeGrid::from_fn(out_dims, target, |z, y, x| {
        trilinear_at(grid, [cz[z], cy[y], cx[x]]) as f32
    }))
}

/// Nearest-neighbor variant for masks; output stays binary.
pub fn resample_mask_nearest(mask: &BinaryMask, target: Spacing) -> Result<BinaryMask> {
    let dims = mask.dims();
    let out_dims = resampled_dims(dims, mask.spacing(), target)?;
    let (src, dst) = (mask.spacing().as_array(), target.as_array());
    let near = |n_out, n_in, a: usize| -> Vec<usize> {
        source_coords(n_out, n_in, src[a], dst[a])
            .into_iter()
            .map(|c| (c.round() as usize).min(n_in - 1))
            .collect()
    };
    let nz = near(out_dims[0], dims[0], 0);
    let ny = near(out_dims[1], dims[1], 1);
    let nx = near(out_dims[2], dims[2], 2);
    Ok(BinaryMask::from_fn(out_dims, target, |z, y, x| {
        mask.get(nz[z], ny[y], nx[x])
    }))
}

fn check_window(dims: Dims, origin: [usize; 3], size: [usize; 3]) -> Result<()> {
    let ok = (0..3).all(|a| size[a] > 0 && origin[a].checked_add(size[a]).is_some_and(|e| e <= dims[a]));
    if ok {
        Ok(())
    } else {
        Err(Error::CropOutOfBounds { origin, size, dims })
    }
}

pub fn crop(grid: &VolumeGrid, origin: [usize; 3], size: [usize; 3]) -> Result<VolumeGrid> {
    check_window(grid.dims(), origin, size)?;
    Ok(VolumeGrid::from_fn(size, grid.spacing(), |z, y, x| {
        grid.get(origin[0] + z, origin[1] + y, origin[2] + x)
    }))
}

pub fn crop_mask(mask: &BinaryMask, origin: [usize; 3], size: [usize; 3]) -> Result<BinaryMask> {
    check_window(mask.dims(), origin, size)?;
    Ok(BinaryMask::from_fn(size, mask.spacing(), |z, y, x| {
        mask.get(origin[0] + z, origin[1] + y, origin[2] + x)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(dims: Dims, seed: u64) -> VolumeGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VolumeGrid::from_fn(dims, Spacing::default(), |_, _, _| rng.random_range(-100.0..100.0))
    }

    #[test]
    fn identity_resample() {
        let g = random_grid([5, 6, 7], 1).with_spacing(Spacing::new(1.0, 0.74, 0.74).unwrap());
        let out = resample_trilinear(&g, g.spacing()).unwrap();
        assert_eq!(out, g);
        let m = BinaryMask::from_fn([5, 6, 7], g.spacing(), |z, y, x| (z * y + x) % 3 == 0);
        assert_eq!(resample_mask_nearest(&m, m.spacing()).unwrap(), m);
    }

    #[test]
    fn constant_stays_constant() {
        let g = VolumeGrid::filled([6, 5, 4], Spacing::default(), -412.5);
        let out = resample_trilinear(&g, Spacing::new(0.7, 1.3, 0.45).unwrap()).unwrap();
        assert!(out.voxels().iter().all(|&v| v == -412.5));
    }

    #[test]
    fn ramp_upsample_matches_analytic() {
        let g = VolumeGrid::from_fn([3, 3, 8], Spacing::default(), |_, _, x| 0.5 * x as f32);
        let out = resample_trilinear(&g, Spacing::new(1.0, 1.0, 0.5).unwrap()).unwrap();
        assert_eq!(out.dims(), [3, 3, 16]);
        for x in 0..15 {
            let expected = 0.5 * (x as f64 * 0.5);
            assert!((out.get(1, 1, x) as f64 - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn mask_stays_binary_and_dims_round() {
        let m = BinaryMask::from_fn([4, 4, 4], Spacing::default(), |z, _, _| z < 2);
        let out = resample_mask_nearest(&m, Spacing::new(0.74, 2.0, 3.0).unwrap()).unwrap();
        assert_eq!(out.dims(), [5, 2, 1]);
    }

    #[test]
    fn degenerate_dims_floor_at_one() {
        let g = VolumeGrid::filled([2, 2, 2], Spacing::default(), 1.0);
        let out = resample_trilinear(&g, Spacing::isotropic(100.0).unwrap()).unwrap();
        assert_eq!(out.dims(), [1, 1, 1]);
    }

    #[test]
    fn crop_full_extent_is_identity() {
        let g = random_grid([4, 5, 6], 2);
        assert_eq!(crop(&g, [0, 0, 0], [4, 5, 6]).unwrap(), g);
    }

    #[test]
    fn crop_prism_size() {
        let g = VolumeGrid::filled([140, 120, 170], Spacing::new(1.0, 0.74, 0.74).unwrap(), 0.0);
        let c = crop(&g, [5, 3, 7], [128, 112, 160]).unwrap();
        assert_eq!(c.dims(), [128, 112, 160]);
        assert_eq!(c.spacing(), g.spacing());
    }

    #[test]
    fn crop_matches_exhaustive_index_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..20 {
            let g = random_grid([7, 8, 9], seed);
            let size = [rng.random_range(1..=7), rng.random_range(1..=8), rng.random_range(1..=9)];
            let origin = [
                rng.random_range(0..=7 - size[0]),
                rng.random_range(0..=8 - size[1]),
                rng.random_range(0..=9 - size[2]),
            ];
            let c = crop(&g, origin, size).unwrap();
            for (i, &v) in c.voxels().iter().enumerate() {
                let x = i % size[2];
                let y = (i / size[2]) % size[1];
                let z = i / (size[1] * size[2]);
                assert_eq!(v, g.voxels()[((origin[0] + z) * 8 + origin[1] + y) * 9 + origin[2] + x]);
            }
        }
    }

    #[test]
    fn crop_out_of_bounds() {
        let g = random_grid([4, 4, 4], 3);
        assert!(crop(&g, [1, 0, 0], [4, 4, 4]).is_err());
        assert!(crop(&g, [0, 0, 0], [0, 4, 4]).is_err());
    }
}
