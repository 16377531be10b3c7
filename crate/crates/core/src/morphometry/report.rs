use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, unravel, BinaryMask, Spacing, FACE_OFFSETS};

use super::edt::{feature_transform, OUTSIDE};
use super::graph::VesselGraph;
use super::skeleton::Skeleton;

/// Segments with π·r̄² below this (mm²) count toward BV5.
pub const BV5_AREA_MM2: f64 = 5.0;
/// Upper edges (mm) of the radius bins; the last bin is open-ended.
pub const RADIUS_BIN_EDGES: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

pub const REPORT_CSV_HEADER: &str =
    "scan_id,tbv_ml,surface_cm2,n_segments,n_endpoints,n_branchpoints,tree_length_mm,bv5_ml,bv5_tbv,r0_1,r1_2,r2_3,r3_4,r_ge4";
pub const GRAPH_CSV_HEADER: &str = "segment_id,node_a,node_b,length_mm,mean_radius_mm,volume_ml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MorphometryReport {
    pub tbv_ml: f64,
    pub surface_cm2: f64,
    pub n_segments: usize,
    pub n_endpoints: usize,
    pub n_branchpoints: usize,
    pub tree_length_mm: f64,
    pub bv5_ml: f64,
    pub bv5_tbv: f64,
    /// Segment counts for [0,1), [1,2), [2,3), [3,4) mm and ≥ 4 mm.
    pub radius_bins: [usize; 5],
}

impl MorphometryReport {
    pub fn csv_row(&self, scan_id: &str) -> String {
        let b = &self.radius_bins;
        format!(
            "{scan_id},{:.6},{:.6},{},{},{},{:.4},{:.6},{:.6},{},{},{},{},{}",
            self.tbv_ml,
            self.surface_cm2,
            self.n_segments,
            self.n_endpoints,
            self.n_branchpoints,
            self.tree_length_mm,
            self.bv5_ml,
            self.bv5_tbv,
            b[0],
            b[1],
            b[2],
            b[3],
            b[4]
        )
    }
}

/// Exposed voxel faces times their physical area, in mm².
pub fn surface_area_mm2(mask: &BinaryMask) -> f64 {
    let dims = mask.dims();
    let sp = mask.spacing();
    let face_area = [sp.dy * sp.dx, sp.dy * sp.dx, sp.dz * sp.dx, sp.dz * sp.dx, sp.dz * sp.dy, sp.dz * sp.dy];
    let mut counts = [0usize; 6];
    for (i, &b) in mask.bits().iter().enumerate() {
        if !b {
            continue;
        }
        let p = unravel(dims, i);
        for (k, off) in FACE_OFFSETS.iter().enumerate() {
            let exposed = match crate::volume::step(dims, p, *off) {
                Some(q) => !mask.get(q[0], q[1], q[2]),
                None => true,
            };
            counts[k] += exposed as usize;
        }
    }
    counts.iter().zip(&face_area).map(|(&c, &a)| c as f64 * a).sum()
}

/// Volume (mL) per segment from nearest-centerline assignment of every mask
/// voxel. Node voxels belong to their lowest-numbered segment.
pub fn segment_volumes(mask: &BinaryMask, skeleton: &Skeleton, graph: &VesselGraph) -> Vec<f64> {
    let voxel_ml = voxel_ml(mask.spacing());
    segment_voxel_counts(mask, skeleton, graph).iter().map(|&c| c as f64 * voxel_ml).collect()
}

fn voxel_ml(spacing: Spacing) -> f64 {
    spacing.voxel_volume() / 1000.0
}

fn segment_voxel_counts(mask: &BinaryMask, skeleton: &Skeleton, graph: &VesselGraph) -> Vec<usize> {
    let dims = mask.dims();
    let mut owner = vec![usize::MAX; mask.len()];
    for seg in graph.segments.iter().rev() {
        for &v in &seg.path {
            let p = skeleton.voxels[v];
            owner[linear_index(dims, p[0], p[1], p[2])] = seg.id;
        }
    }
    let sites: Vec<bool> = owner.iter().map(|&o| o != usize::MAX).collect();
    let ft = feature_transform(dims, mask.spacing(), &sites);
    let mut counts = vec![0usize; graph.segments.len()];
    for (i, &b) in mask.bits().iter().enumerate() {
        if b && ft.nearest[i] != OUTSIDE {
            counts[owner[ft.nearest[i]]] += 1;
        }
    }
    counts
}

fn radius_bin(r: f64) -> usize {
    RADIUS_BIN_EDGES.iter().position(|&hi| r < hi).unwrap_or(RADIUS_BIN_EDGES.len())
}

/// Scalar parameters; fills each segment's `volume_ml` in `graph`.
pub fn compute_report(mask: &BinaryMask, skeleton: &Skeleton, graph: &mut VesselGraph) -> Result<MorphometryReport> {
    mask.check_same_dims(skeleton.dims)?;
    let count = mask.count();
    if count == 0 {
        return Ok(MorphometryReport::default());
    }
    let spacing: Spacing = mask.spacing();
    let voxel_ml = voxel_ml(spacing);
    let tbv_ml = count as f64 * voxel_ml;
    // integer accumulation keeps BV5 <= TBV exact
    let counts = segment_voxel_counts(mask, skeleton, graph);
    let mut bv5_voxels = 0usize;
    let mut bins = [0usize; 5];
    for (seg, &c) in graph.segments.iter_mut().zip(&counts) {
        seg.volume_ml = c as f64 * voxel_ml;
        if std::f64::consts::PI * seg.mean_radius_mm.powi(2) < BV5_AREA_MM2 {
            bv5_voxels += c;
        }
        bins[radius_bin(seg.mean_radius_mm)] += 1;
    }
    Ok(MorphometryReport {
        tbv_ml,
        surface_cm2: surface_area_mm2(mask) / 100.0,
        n_segments: graph.segments.len(),
        n_endpoints: graph.n_endpoints(),
        n_branchpoints: graph.n_branchpoints(),
        tree_length_mm: graph.tree_length_mm(),
        bv5_ml: bv5_voxels as f64 * voxel_ml,
        bv5_tbv: bv5_voxels as f64 / count as f64,
        radius_bins: bins,
    })
}

pub fn report_csv(rows: &[(String, MorphometryReport)]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for (id, r) in rows {
        out.push_str(&r.csv_row(id));
        out.push('\n');
    }
    out
}

pub fn write_report_csv(path: &Path, rows: &[(String, MorphometryReport)]) -> Result<()> {
    std::fs::write(path, report_csv(rows)).map_err(|e| Error::io(path, e))
}

/// One row per segment: id, end nodes, length, mean radius, volume.
pub fn graph_csv(graph: &VesselGraph) -> String {
    let fmt_node = |n: Option<usize>| n.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(GRAPH_CSV_HEADER);
    out.push('\n');
    for s in &graph.segments {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.6}\n",
            s.id,
            fmt_node(s.node_a),
            fmt_node(s.node_b),
            s.length_mm,
            s.mean_radius_mm,
            s.volume_ml
        ));
    }
    out
}

pub fn write_graph_csv(path: &Path, graph: &VesselGraph) -> Result<()> {
    std::fs::write(path, graph_csv(graph)).map_err(|e| Error::io(path, e))
}
