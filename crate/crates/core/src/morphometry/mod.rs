//! Vessel quantification: distance map, thinning, centerline graph and the
//! scalar report (TBV, surface, counts, BV5, radius bins).

mod edt;
mod graph;
mod report;
mod skeleton;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::BinaryMask;

pub use edt::{distance_map, feature_transform, FeatureTransform, OUTSIDE};
pub use graph::{build_graph, Node, NodeKind, Segment, VesselGraph};
pub use report::{
    compute_report, graph_csv, report_csv, segment_volumes, surface_area_mm2, write_graph_csv, write_report_csv, MorphometryReport,
    BV5_AREA_MM2, GRAPH_CSV_HEADER, RADIUS_BIN_EDGES, REPORT_CSV_HEADER,
};
pub use skeleton::{skeletonize, Skeleton};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphometryOptions {
    /// Terminal branches shorter than this (mm) are pruned; 0 disables.
    pub prune_spur_mm: f64,
}

/// Result of the full quantification chain on one mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub skeleton: Skeleton,
    pub graph: VesselGraph,
    pub report: MorphometryReport,
}

/// Skeletonize → graph → report, with optional spur pruning.
pub fn analyze(mask: &BinaryMask, options: &MorphometryOptions) -> Result<Analysis> {
    let mut skeleton = skeletonize(mask);
    let mut graph = build_graph(&skeleton, mask.spacing());
    if options.prune_spur_mm > 0.0 {
        let drop = graph::spur_voxels(&graph, options.prune_spur_mm);
        if !drop.is_empty() {
            let mut kept = skeleton.to_mask();
            for v in drop {
                let p = skeleton.voxels[v];
                kept.set(p[0], p[1], p[2], false);
            }
            let radii = distance_map(mask);
            skeleton = Skeleton::from_mask(&kept, &radii);
            graph = build_graph(&skeleton, mask.spacing());
        }
    }
    let report = compute_report(mask, &skeleton, &mut graph)?;
    Ok(Analysis { skeleton, graph, report })
}
