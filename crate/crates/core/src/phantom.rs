//! Synthetic vessel phantoms with analytically known geometry.
//!
//! Tubes are flat-ended cylinders; trees are unions of capsules (cylinders
//! with hemispherical caps) grown by recursive binary branching. Every
//! phantom carries its own ground truth so downstream stages can be checked
//! against construction rather than annotation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, topology, BinaryMask, Dims, Spacing, Topology, VolumeGrid};

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}
fn unit(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(p, add(a, scale(ab, t))))
}

/// Minimum distance between segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let eps = 1e-12;
    let (s, t);
    if a <= eps && e <= eps {
        return norm(r);
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    norm(sub(add(p1, scale(d1, s)), add(p2, scale(d2, t))))
}

/// Physical position (mm) of a voxel center; the origin voxel sits at 0.
fn center_mm(spacing: Spacing, z: usize, y: usize, x: usize) -> Vec3 {
    [z as f64 * spacing.dz, y as f64 * spacing.dy, x as f64 * spacing.dx]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensitySpec {
    pub vessel: f64,
    pub background: f64,
    pub noise_sigma: f64,
    /// Gaussian blur (voxels) applied to the rendered vessel indicator,
    /// giving partial-volume borders.
    pub blur_sigma_vox: f64,
    /// Number of low-intensity emphysema-like blobs.
    pub emphysema_blobs: usize,
    pub emphysema_radius_mm: [f64; 2],
    pub emphysema_intensity: f64,
}

impl Default for IntensitySpec {
    fn default() -> Self {
        IntensitySpec {
            vessel: 100.0,
            background: -800.0,
            noise_sigma: 0.0,
            blur_sigma_vox: 0.0,
            emphysema_blobs: 0,
            emphysema_radius_mm: [2.0, 5.0],
            emphysema_intensity: -950.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSpec {
    pub depth: usize,
    pub root_radius_mm: f64,
    /// Child radius = parent radius * decay.
    pub radius_decay: f64,
    /// Half-angle between a child and its parent's direction, in degrees.
    pub branch_angle_deg: [f64; 2],
    pub segment_length_mm: [f64; 2],
    /// Child length range = parent range * decay.
    pub length_decay: f64,
    /// Root start in mm; defaults to the center of the z = 0 face region.
    pub root_start_mm: Option<[f64; 3]>,
    /// Root direction (z, y, x); defaults to +z.
    pub root_direction: Option<[f64; 3]>,
    /// Minimum surface gap between non-adjacent branches, in voxels.
    pub min_clearance_vox: f64,
    /// Use flat-ended cylinders instead of capsules.
    pub flat_ends: bool,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            depth: 3,
            root_radius_mm: 3.0,
            radius_decay: 0.75,
            branch_angle_deg: [25.0, 40.0],
            segment_length_mm: [18.0, 22.0],
            length_decay: 0.8,
            root_start_mm: None,
            root_direction: None,
            min_clearance_vox: 4.0,
            flat_ends: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing_mm: [f64; 3],
    pub tree: TreeSpec,
    pub intensity: IntensitySpec,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [96, 96, 96],
            spacing_mm: [1.0, 1.0, 1.0],
            tree: TreeSpec::default(),
            intensity: IntensitySpec::default(),
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("phantom: {m}")));
        Spacing::from_array(self.spacing_mm)?;
        if self.dims.contains(&0) {
            return fail("dims must be positive");
        }
        let t = &self.tree;
        if !(t.root_radius_mm > 0.0 && t.radius_decay > 0.0 && t.length_decay > 0.0) {
            return fail("radii and decay factors must be positive");
        }
        if t.segment_length_mm[0] <= 0.0 || t.segment_length_mm[0] > t.segment_length_mm[1] {
            return fail("segment length range must be positive and ordered");
        }
        if t.branch_angle_deg[0] > t.branch_angle_deg[1] {
            return fail("branch angle range must be ordered");
        }
        if self.intensity.vessel <= self.intensity.background {
            return fail("vessel intensity must exceed background intensity");
        }
        if self.intensity.noise_sigma < 0.0 || self.intensity.blur_sigma_vox < 0.0 {
            return fail("noise and blur must be non-negative");
        }
        Ok(())
    }
}

/// One constructed branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSegment {
    pub id: usize,
    pub parent: Option<usize>,
    pub start_mm: [f64; 3],
    pub end_mm: [f64; 3],
    pub radius_mm: f64,
    pub length_mm: f64,
    /// Shortened to stay inside the grid.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthGraph {
    pub segments: Vec<TruthSegment>,
    pub n_segments: usize,
    pub n_endpoints: usize,
    pub n_branchpoints: usize,
    pub total_length_mm: f64,
    /// Non-adjacent branches keep at least the requested clearance.
    pub clearance_ok: bool,
    pub min_clearance_vox: f64,
    /// Digital topology of the rendered mask; `None` until rasterized.
    pub topology: Option<Topology>,
}

impl TruthGraph {
    /// Clearance holds and the rendered mask is one tunnel-free,
    /// cavity-free piece, so its centerline graph is a tree.
    pub fn is_valid(&self) -> bool {
        self.clearance_ok
            && self.topology == Some(Topology { components: 1, tunnels: 0, cavities: 0 })
    }
}

/// Analytic record of a tube phantom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeRecord {
    pub volume_mm3: f64,
    pub length_mm: f64,
    pub radius_mm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Z,
    Y,
    X,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::Z => 0,
            Axis::Y => 1,
            Axis::X => 2,
        }
    }
}

/// Renders intensities for a vessel indicator: blur, contrast, blobs, noise.
fn render_intensity(mask: &BinaryMask, spec: &IntensitySpec, rng: &mut ChaCha8Rng) -> VolumeGrid {
    let dims = mask.dims();
    let spacing = mask.spacing();
    let indicator = VolumeGrid::from_fn(dims, spacing, |z, y, x| mask.get(z, y, x) as u8 as f32);
    let soft: Vec<f64> = if spec.blur_sigma_vox > 0.0 {
        crate::features::gaussian_smooth(&indicator, spec.blur_sigma_vox)
    } else {
        indicator.voxels().iter().map(|&v| v as f64).collect()
    };
    let mut background = vec![spec.background; soft.len()];
    let extent = [
        dims[0] as f64 * spacing.dz,
        dims[1] as f64 * spacing.dy,
        dims[2] as f64 * spacing.dx,
    ];
    for _ in 0..spec.emphysema_blobs {
        let c = [
            rng.random_range(0.0..extent[0]),
            rng.random_range(0.0..extent[1]),
            rng.random_range(0.0..extent[2]),
        ];
        let r = if spec.emphysema_radius_mm[0] < spec.emphysema_radius_mm[1] {
            rng.random_range(spec.emphysema_radius_mm[0]..spec.emphysema_radius_mm[1])
        } else {
            spec.emphysema_radius_mm[0]
        };
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    if norm(sub(center_mm(spacing, z, y, x), c)) <= r {
                        background[linear_index(dims, z, y, x)] = spec.emphysema_intensity;
                    }
                }
            }
        }
    }
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("valid sigma");
    let voxels = soft
        .iter()
        .zip(&background)
        .map(|(&s, &bg)| {
            let mut v = bg + (spec.vessel - bg) * s;
            if spec.noise_sigma > 0.0 {
                v += noise.sample(rng);
            }
            v as f32
        })
        .collect();
    VolumeGrid::new(dims, spacing, voxels).expect("finite intensities")
}

/// Straight flat-ended cylinder through the grid center along `axis`.
/// The axis passes through voxel centers.
#[allow(clippy::too_many_arguments)]
pub fn generate_tube_phantom(
    dims: Dims,
    spacing: Spacing,
    radius_mm: f64,
    axis: Axis,
    length_mm: f64,
    intensity: &IntensitySpec,
    seed: u64,
) -> Result<(VolumeGrid, BinaryMask, TubeRecord)> {
    let a = axis.index();
    let sp = spacing.as_array();
    let center: Vec3 = [
        (dims[0] / 2) as f64 * sp[0],
        (dims[1] / 2) as f64 * sp[1],
        (dims[2] / 2) as f64 * sp[2],
    ];
    let extent = (dims[a] - 1) as f64 * sp[a];
    let start = center[a] - length_mm / 2.0;
    let end = center[a] + length_mm / 2.0;
    let fits_axis = start >= -1e-9 && end <= extent + 1e-9;
    let fits_radius = (0..3).filter(|&b| b != a).all(|b| {
        center[b] - radius_mm >= -1e-9 && center[b] + radius_mm <= (dims[b] - 1) as f64 * sp[b] + 1e-9
    });
    if !(radius_mm > 0.0 && length_mm > 0.0) || !fits_axis || !fits_radius {
        return Err(Error::PhantomBounds(format!(
            "tube r={radius_mm}mm L={length_mm}mm does not fit {dims:?} at {sp:?}mm"
        )));
    }
    let mask = BinaryMask::from_fn(dims, spacing, |z, y, x| {
        let p = center_mm(spacing, z, y, x);
        let along = p[a];
        let radial2: f64 = (0..3).filter(|&b| b != a).map(|b| (p[b] - center[b]).powi(2)).sum();
        along >= start - 1e-9 && along <= end + 1e-9 && radial2 <= radius_mm * radius_mm + 1e-9
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = render_intensity(&mask, intensity, &mut rng);
    let record = TubeRecord {
        volume_mm3: std::f64::consts::PI * radius_mm * radius_mm * length_mm,
        length_mm,
        radius_mm,
    };
    Ok((grid, mask, record))
}

struct Branch {
    start: Vec3,
    dir: Vec3,
    length_range: [f64; 2],
    radius: f64,
    level: usize,
    parent: Option<usize>,
}

/// Largest `t <= length` keeping `start + t * dir` at least `margin` inside the grid.
fn fit_length(start: Vec3, dir: Vec3, length: f64, margin: f64, extent: Vec3) -> f64 {
    let mut t = length;
    for a in 0..3 {
        if dir[a] > 1e-12 {
            t = t.min((extent[a] - margin - start[a]) / dir[a]);
        } else if dir[a] < -1e-12 {
            t = t.min((margin - start[a]) / dir[a]);
        }
    }
    t
}

fn perpendicular(d: Vec3) -> Vec3 {
    let helper = if d[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    unit(cross(d, helper))
}

/// Rotates `v` about unit axis `k` by `angle` radians (Rodrigues).
fn rotate(v: Vec3, k: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    add(add(scale(v, c), scale(cross(k, v), s)), scale(k, dot(k, v) * (1.0 - c)))
}

fn inside_capsule(p: Vec3, s: &TruthSegment, flat: bool) -> bool {
    if flat {
        let ab = sub(s.end_mm, s.start_mm);
        let len2 = dot(ab, ab);
        let t = dot(sub(p, s.start_mm), ab) / len2;
        if !(0.0..=1.0).contains(&t) {
            return false;
        }
        norm(sub(p, add(s.start_mm, scale(ab, t)))) <= s.radius_mm
    } else {
        point_segment_distance(p, s.start_mm, s.end_mm) <= s.radius_mm
    }
}

/// Voxelizes the union of the given capsules.
pub fn rasterize_segments(segments: &[TruthSegment], dims: Dims, spacing: Spacing, flat_ends: bool) -> BinaryMask {
    let mut mask = BinaryMask::empty(dims, spacing);
    let sp = spacing.as_array();
    for s in segments {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let min = s.start_mm[a].min(s.end_mm[a]) - s.radius_mm;
            let max = s.start_mm[a].max(s.end_mm[a]) + s.radius_mm;
            lo[a] = (min / sp[a]).floor().max(0.0) as usize;
            hi[a] = ((max / sp[a]).ceil().max(0.0) as usize).min(dims[a] - 1);
        }
        for z in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for x in lo[2]..=hi[2] {
                    if inside_capsule(center_mm(spacing, z, y, x), s, flat_ends) {
                        mask.set(z, y, x, true);
                    }
                }
            }
        }
    }
    mask
}

fn clearance_ok(segments: &[TruthSegment], min_gap_mm: f64) -> bool {
    let shares_node = |a: &TruthSegment, b: &TruthSegment| {
        a.parent == Some(b.id) || b.parent == Some(a.id) || (a.parent.is_some() && a.parent == b.parent)
    };
    for (i, a) in segments.iter().enumerate() {
        for b in &segments[i + 1..] {
            if shares_node(a, b) {
                continue;
            }
            let d = segment_segment_distance(a.start_mm, a.end_mm, b.start_mm, b.end_mm);
            if d - a.radius_mm - b.radius_mm < min_gap_mm {
                return false;
            }
        }
    }
    true
}

/// Builds the ground-truth branch list without rendering (no topology).
pub fn grow_tree(spec: &PhantomSpec) -> Result<TruthGraph> {
    spec.validate()?;
    let spacing = Spacing::from_array(spec.spacing_mm)?;
    let sp = spacing.as_array();
    let extent: Vec3 = [
        (spec.dims[0] - 1) as f64 * sp[0],
        (spec.dims[1] - 1) as f64 * sp[1],
        (spec.dims[2] - 1) as f64 * sp[2],
    ];
    let t = &spec.tree;
    let start = t.root_start_mm.unwrap_or([
        t.root_radius_mm + 2.0 * sp[0],
        extent[1] / 2.0,
        extent[2] / 2.0,
    ]);
    if (0..3).any(|a| start[a] < 0.0 || start[a] > extent[a]) {
        return Err(Error::PhantomBounds(format!("root start {start:?} outside the grid")));
    }
    let dir = unit(t.root_direction.unwrap_or([1.0, 0.0, 0.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut segments: Vec<TruthSegment> = Vec::new();
    let mut stack = vec![Branch {
        start,
        dir,
        length_range: t.segment_length_mm,
        radius: t.root_radius_mm,
        level: 0,
        parent: None,
    }];
    let min_voxel = sp.iter().cloned().fold(f64::INFINITY, f64::min);

    // Breadth-wise growth keeps ids level-ordered.
    while !stack.is_empty() {
        let mut next = Vec::new();
        for b in stack.drain(..) {
            let wanted = if b.length_range[0] < b.length_range[1] {
                rng.random_range(b.length_range[0]..b.length_range[1])
            } else {
                b.length_range[0]
            };
            let margin = b.radius + 2.0 * min_voxel;
            let length = fit_length(b.start, b.dir, wanted, margin, extent);
            let truncated = length < wanted - 1e-9;
            let id = segments.len();
            segments.push(TruthSegment {
                id,
                parent: b.parent,
                start_mm: b.start,
                end_mm: add(b.start, scale(b.dir, length.max(0.0))),
                radius_mm: b.radius,
                length_mm: length.max(0.0),
                truncated,
            });
            if truncated || b.level >= t.depth {
                continue;
            }
            // two children in a random plane through the parent direction
            let end = segments[id].end_mm;
            let spin = rng.random_range(0.0..std::f64::consts::TAU);
            let axis = rotate(perpendicular(b.dir), b.dir, spin);
            let radius = b.radius * t.radius_decay;
            let range = [b.length_range[0] * t.length_decay, b.length_range[1] * t.length_decay];
            let mut children = Vec::new();
            for sign in [1.0, -1.0] {
                let angle = if t.branch_angle_deg[0] < t.branch_angle_deg[1] {
                    rng.random_range(t.branch_angle_deg[0]..t.branch_angle_deg[1])
                } else {
                    t.branch_angle_deg[0]
                };
                let d = unit(rotate(b.dir, axis, sign * angle.to_radians()));
                let child_margin = radius + 2.0 * min_voxel;
                let fit = fit_length(end, d, range[1], child_margin, extent);
                let min_len = 2.0 * radius + 3.0 * min_voxel;
                if fit < min_len.max(range[0] * 0.5) {
                    children.clear();
                    break;
                }
                children.push(Branch {
                    start: end,
                    dir: d,
                    length_range: range,
                    radius,
                    level: b.level + 1,
                    parent: Some(id),
                });
            }
            next.extend(children);
        }
        stack = next;
    }
    if segments[0].length_mm <= 0.0 {
        return Err(Error::PhantomBounds("root segment has no room inside the grid".into()));
    }

    let mut child_count = vec![0usize; segments.len()];
    for s in &segments {
        if let Some(p) = s.parent {
            child_count[p] += 1;
        }
    }
    let leaves = child_count.iter().filter(|&&c| c == 0).count();
    let branchpoints = child_count.iter().filter(|&&c| c >= 2).count();
    let total_length_mm = segments.iter().map(|s| s.length_mm).sum();
    let clearance = clearance_ok(&segments, t.min_clearance_vox * min_voxel);
    Ok(TruthGraph {
        n_segments: segments.len(),
        n_endpoints: leaves + 1,
        n_branchpoints: branchpoints,
        total_length_mm,
        clearance_ok: clearance,
        min_clearance_vox: t.min_clearance_vox,
        topology: None,
        segments,
    })
}

pub fn generate_tree_phantom(spec: &PhantomSpec) -> Result<(VolumeGrid, BinaryMask, TruthGraph)> {
    let mut truth = grow_tree(spec)?;
    let spacing = Spacing::from_array(spec.spacing_mm)?;
    let mask = rasterize_segments(&truth.segments, spec.dims, spacing, spec.tree.flat_ends);
    truth.topology = Some(topology(&mask));
    if !truth.is_valid() {
        log::warn!(
            "phantom seed {} is not a valid tree (clearance ok: {}, topology: {:?})",
            spec.seed,
            truth.clearance_ok,
            truth.topology
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x1e7e_5171);
    let grid = render_intensity(&mask, &spec.intensity, &mut rng);
    Ok((grid, mask, truth))
}
