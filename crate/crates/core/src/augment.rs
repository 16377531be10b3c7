//! Weak (rotation, scaling, mirroring) and strong (elastic deformation,
//! gamma) augmentations. Image and mask always receive the same geometric
//! transform: trilinear sampling for the image, nearest for the mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, trilinear_at, BinaryMask, Dims, VolumeGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakSpec {
    /// Rotation angle range in degrees about the z, y and x axes.
    pub rotation_deg: [[f64; 2]; 3],
    /// Isotropic scale factor range.
    pub scale: [f64; 2],
    /// Axes (z, y, x) eligible for mirroring.
    pub mirror_axes: [bool; 3],
    pub mirror_prob: f64,
}

impl Default for WeakSpec {
    fn default() -> Self {
        WeakSpec {
            rotation_deg: [[-15.0, 15.0]; 3],
            scale: [0.9, 1.1],
            mirror_axes: [true; 3],
            mirror_prob: 0.5,
        }
    }
}

impl WeakSpec {
    pub fn identity() -> Self {
        WeakSpec {
            rotation_deg: [[0.0, 0.0]; 3],
            scale: [1.0, 1.0],
            mirror_axes: [false; 3],
            mirror_prob: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongSpec {
    /// Control-point spacing of the elastic field, in voxels.
    pub elastic_grid_vox: f64,
    /// Standard deviation of control-point displacements, in voxels.
    pub elastic_sigma_vox: f64,
    pub gamma: [f64; 2],
}

impl Default for StrongSpec {
    fn default() -> Self {
        StrongSpec {
            elastic_grid_vox: 16.0,
            elastic_sigma_vox: 4.0,
            gamma: [0.7, 1.4],
        }
    }
}

impl StrongSpec {
    pub fn identity() -> Self {
        StrongSpec {
            elastic_grid_vox: 16.0,
            elastic_sigma_vox: 0.0,
            gamma: [1.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    pub weak: WeakSpec,
    pub strong: StrongSpec,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("augmentation: {m}")));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !self.weak.rotation_deg.iter().all(|&r| ordered(r)) {
            return fail("rotation ranges must be ordered");
        }
        if !ordered(self.weak.scale) || self.weak.scale[0] <= 0.0 {
            return fail("scale range must be ordered and positive");
        }
        if !(0.0..=1.0).contains(&self.weak.mirror_prob) {
            return fail("mirror_prob must lie in [0, 1]");
        }
        if !ordered(self.strong.gamma) || self.strong.gamma[0] <= 0.0 {
            return fail("gamma range must be ordered and positive");
        }
        if !(self.strong.elastic_grid_vox >= 1.0) || !(self.strong.elastic_sigma_vox >= 0.0) {
            return fail("elastic grid spacing must be >= 1 and sigma >= 0");
        }
        Ok(())
    }

    fn rng(&self, draw_seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ draw_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        rng.set_stream(stream);
        rng
    }
}

/// Index-space affine map `src = center + A (dst - center)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakTransform {
    pub angles_deg: [f64; 3],
    pub scale: f64,
    pub mirror: [bool; 3],
    matrix: [[f64; 3]; 3],
    center: [f64; 3],
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotation by `deg` about `axis`, acting on the two remaining coordinates.
fn rotation(axis: usize, deg: f64) -> [[f64; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    m[i][i] = c;
    m[j][j] = c;
    m[i][j] = -s;
    m[j][i] = s;
    m
}

impl WeakTransform {
    pub fn new(angles_deg: [f64; 3], scale: f64, mirror: [bool; 3], dims: Dims, spacing: [f64; 3]) -> Self {
        // forward physical map: rotation * scale * mirror; store its inverse
        let inv_rot = matmul(
            &matmul(&rotation(2, -angles_deg[2]), &rotation(1, -angles_deg[1])),
            &rotation(0, -angles_deg[0]),
        );
        let mut matrix = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let flip = if mirror[i] { -1.0 } else { 1.0 };
                let ratio = if i == j { 1.0 } else { spacing[j] / spacing[i] };
                matrix[i][j] = flip * inv_rot[i][j] * ratio / scale;
            }
        }
        let center = [
            (dims[0] as f64 - 1.0) / 2.0,
            (dims[1] as f64 - 1.0) / 2.0,
            (dims[2] as f64 - 1.0) / 2.0,
        ];
        WeakTransform {
            angles_deg,
            scale,
            mirror,
            matrix,
            center,
        }
    }

    pub fn draw(spec: &WeakSpec, dims: Dims, spacing: [f64; 3], rng: &mut impl Rng) -> Self {
        let mut angles = [0.0; 3];
        for (a, r) in angles.iter_mut().zip(&spec.rotation_deg) {
            *a = if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..r[1]) };
        }
        let scale = if spec.scale[0] == spec.scale[1] {
            spec.scale[0]
        } else {
            rng.random_range(spec.scale[0]..spec.scale[1])
        };
        let mut mirror = [false; 3];
        for (m, &eligible) in mirror.iter_mut().zip(&spec.mirror_axes) {
            let flip = rng.random::<f64>() < spec.mirror_prob;
            *m = eligible && flip;
        }
        Self::new(angles, scale, mirror, dims, spacing)
    }

    #[inline]
    pub fn source(&self, dst: [f64; 3]) -> [f64; 3] {
        let d = [dst[0] - self.center[0], dst[1] - self.center[1], dst[2] - self.center[2]];
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.matrix[i][0] * d[0] + self.matrix[i][1] * d[1] + self.matrix[i][2] * d[2] + self.center[i];
        }
        out
    }
}

/// Smooth displacement field from a cubic B-spline control lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ElasticField {
    spacing_vox: f64,
    lattice: [usize; 3],
    /// Displacement (z, y, x) per control point.
    control: Vec<[f64; 3]>,
}

fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - t).powi(3) / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

impl ElasticField {
    pub fn draw(dims: Dims, spacing_vox: f64, sigma_vox: f64, rng: &mut impl Rng) -> Self {
        // one extra node before the grid and two after for cubic support
        let lattice = [
            (dims[0] as f64 / spacing_vox).ceil() as usize + 4,
            (dims[1] as f64 / spacing_vox).ceil() as usize + 4,
            (dims[2] as f64 / spacing_vox).ceil() as usize + 4,
        ];
        let n = lattice.iter().product();
        let normal = Normal::new(0.0, sigma_vox.max(0.0)).expect("valid sigma");
        let control = (0..n)
            .map(|_| [normal.sample(rng), normal.sample(rng), normal.sample(rng)])
            .collect();
        ElasticField {
            spacing_vox,
            lattice,
            control,
        }
    }

    pub fn displacement(&self, p: [f64; 3]) -> [f64; 3] {
        let mut base = [0usize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let u = p[a] / self.spacing_vox;
            let cell = u.floor();
            base[a] = cell as usize; // node index of (cell - 1) after the +1 offset
            w[a] = bspline_weights(u - cell);
        }
        let mut d = [0.0; 3];
        for (i, wz) in w[0].iter().enumerate() {
            for (j, wy) in w[1].iter().enumerate() {
                for (k, wx) in w[2].iter().enumerate() {
                    let idx = linear_index(self.lattice, base[0] + i, base[1] + j, base[2] + k);
                    let c = &self.control[idx];
                    let wt = wz * wy * wx;
                    for a in 0..3 {
                        d[a] += wt * c[a];
                    }
                }
            }
        }
        d
    }
}

/// Resamples image and mask through `source`. Samples falling outside the
/// grid take the image minimum and mask 0.
pub fn warp_pair(grid: &VolumeGrid, mask: &BinaryMask, source: impl Fn([f64; 3]) -> [f64; 3]) -> (VolumeGrid, BinaryMask) {
    let dims = grid.dims();
    let (fill, _) = grid.min_max();
    let inside = |c: [f64; 3]| (0..3).all(|a| c[a] >= -0.5 && c[a] <= dims[a] as f64 - 0.5);
    let mut out_grid = Vec::with_capacity(grid.len());
    let mut out_mask = Vec::with_capacity(grid.len());
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let s = source([z as f64, y as f64, x as f64]);
                if !inside(s) {
                    out_grid.push(fill);
                    out_mask.push(false);
                    continue;
                }
                let clamped = [
                    s[0].clamp(0.0, (dims[0] - 1) as f64),
                    s[1].clamp(0.0, (dims[1] - 1) as f64),
                    s[2].clamp(0.0, (dims[2] - 1) as f64),
                ];
                out_grid.push(trilinear_at(grid, clamped) as f32);
                let n = [
                    (clamped[0].round() as usize).min(dims[0] - 1),
                    (clamped[1].round() as usize).min(dims[1] - 1),
                    (clamped[2].round() as usize).min(dims[2] - 1),
                ];
                out_mask.push(mask.get(n[0], n[1], n[2]));
            }
        }
    }
    (
        VolumeGrid::new(dims, grid.spacing(), out_grid).expect("finite samples"),
        BinaryMask::new(dims, mask.spacing(), out_mask).expect("same length"),
    )
}

/// `v -> lo + (hi - lo) * ((v - lo) / (hi - lo))^gamma` with the grid's own range.
pub fn gamma_correct(grid: &VolumeGrid, gamma: f64) -> VolumeGrid {
    if gamma == 1.0 {
        return grid.clone();
    }
    let (lo, hi) = grid.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    let range = hi - lo;
    let mut out = grid.clone();
    if range <= 0.0 {
        return out;
    }
    for v in out.voxels_mut() {
        let t = ((*v as f64 - lo) / range).clamp(0.0, 1.0);
        *v = (lo + range * t.powf(gamma)) as f32;
    }
    out
}

fn check_pair(grid: &VolumeGrid, mask: &BinaryMask) -> Result<()> {
    mask.check_same_dims(grid.dims())
}

pub fn apply_weak(grid: &VolumeGrid, mask: &BinaryMask, spec: &AugmentationSpec, draw_seed: u64) -> Result<(VolumeGrid, BinaryMask)> {
    check_pair(grid, mask)?;
    let mut rng = spec.rng(draw_seed, 1);
    let t = WeakTransform::draw(&spec.weak, grid.dims(), grid.spacing().as_array(), &mut rng);
    Ok(warp_pair(grid, mask, |p| t.source(p)))
}

fn draw_gamma(s: &StrongSpec, rng: &mut impl Rng) -> f64 {
    if s.gamma[0] == s.gamma[1] {
        s.gamma[0]
    } else {
        rng.random_range(s.gamma[0]..s.gamma[1])
    }
}

fn draw_elastic(s: &StrongSpec, dims: Dims, rng: &mut impl Rng) -> Option<ElasticField> {
    (s.elastic_sigma_vox > 0.0).then(|| ElasticField::draw(dims, s.elastic_grid_vox, s.elastic_sigma_vox, rng))
}

fn displaced(field: &Option<ElasticField>, p: [f64; 3]) -> [f64; 3] {
    match field {
        Some(f) => {
            let d = f.displacement(p);
            [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
        }
        None => p,
    }
}

pub fn apply_strong(grid: &VolumeGrid, mask: &BinaryMask, spec: &AugmentationSpec, draw_seed: u64) -> Result<(VolumeGrid, BinaryMask)> {
    check_pair(grid, mask)?;
    let mut rng = spec.rng(draw_seed, 2);
    let field = draw_elastic(&spec.strong, grid.dims(), &mut rng);
    let gamma = draw_gamma(&spec.strong, &mut rng);
    let (warped, warped_mask) = match field {
        Some(_) => warp_pair(grid, mask, |p| displaced(&field, p)),
        None => (grid.clone(), mask.clone()),
    };
    Ok((gamma_correct(&warped, gamma), warped_mask))
}

/// `A^s(A^w(x, y))` with the same draws as the two separate calls, but the
/// rigid and elastic maps are composed so the image is resampled once.
pub fn apply_weak_then_strong(grid: &VolumeGrid, mask: &BinaryMask, spec: &AugmentationSpec, draw_seed: u64) -> Result<(VolumeGrid, BinaryMask)> {
    check_pair(grid, mask)?;
    let mut rng_w = spec.rng(draw_seed, 1);
    let t = WeakTransform::draw(&spec.weak, grid.dims(), grid.spacing().as_array(), &mut rng_w);
    let mut rng_s = spec.rng(draw_seed, 2);
    let field = draw_elastic(&spec.strong, grid.dims(), &mut rng_s);
    let gamma = draw_gamma(&spec.strong, &mut rng_s);
    let (warped, warped_mask) = warp_pair(grid, mask, |p| t.source(displaced(&field, p)));
    Ok((gamma_correct(&warped, gamma), warped_mask))
}
