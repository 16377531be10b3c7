//! Centerline graph: endpoint and branchpoint nodes joined by segments.

use std::collections::HashSet;

use serde::Serialize;

use crate::volume::Spacing;

use super::skeleton::Skeleton;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Endpoint,
    Branchpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// Skeleton voxel indices; several for a merged branchpoint cluster.
    pub members: Vec<usize>,
    /// Mean voxel coordinate of the members (z, y, x).
    pub coord: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub id: usize,
    /// `None` for isolated cycles and isolated voxels.
    pub node_a: Option<usize>,
    pub node_b: Option<usize>,
    /// Skeleton voxel indices along the segment, node voxels included.
    pub path: Vec<usize>,
    pub length_mm: f64,
    pub mean_radius_mm: f64,
    /// Filled in by the report from nearest-centerline assignment.
    pub volume_ml: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VesselGraph {
    pub nodes: Vec<Node>,
    pub segments: Vec<Segment>,
}

impl VesselGraph {
    pub fn n_endpoints(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Endpoint).count()
    }

    pub fn n_branchpoints(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Branchpoint).count()
    }

    pub fn tree_length_mm(&self) -> f64 {
        self.segments.iter().map(|s| s.length_mm).sum()
    }
}

fn step_mm(a: [usize; 3], b: [usize; 3], spacing: Spacing) -> f64 {
    let dz = (a[0] as f64 - b[0] as f64) * spacing.dz;
    let dy = (a[1] as f64 - b[1] as f64) * spacing.dy;
    let dx = (a[2] as f64 - b[2] as f64) * spacing.dx;
    (dz * dz + dy * dy + dx * dx).sqrt()
}

fn make_segment(skel: &Skeleton, spacing: Spacing, path: Vec<usize>, ends: (Option<usize>, Option<usize>), closed: bool) -> Segment {
    let mut length: f64 = path.windows(2).map(|w| step_mm(skel.voxels[w[0]], skel.voxels[w[1]], spacing)).sum();
    if closed && path.len() > 1 {
        length += step_mm(skel.voxels[*path.last().unwrap()], skel.voxels[path[0]], spacing);
    }
    let mean_radius = path.iter().map(|&i| skel.radius_mm[i]).sum::<f64>() / path.len().max(1) as f64;
    Segment {
        id: 0,
        node_a: ends.0,
        node_b: ends.1,
        path,
        length_mm: length,
        mean_radius_mm: mean_radius,
        volume_ml: 0.0,
    }
}

/// Classifies skeleton voxels by 26-neighbor degree and traces segments.
/// `spacing` sets physical lengths; it normally equals the skeleton's own.
pub fn build_graph(skel: &Skeleton, spacing: Spacing) -> VesselGraph {
    let n = skel.len();
    let degree: Vec<usize> = (0..n).map(|i| skel.degree(i)).collect();
    let mut node_of = vec![usize::MAX; n];
    let mut nodes: Vec<Node> = Vec::new();

    let mut push_node = |members: Vec<usize>, kind: NodeKind, node_of: &mut Vec<usize>| {
        let id = nodes.len();
        let mut coord = [0.0; 3];
        for &m in &members {
            node_of[m] = id;
            for (c, &v) in coord.iter_mut().zip(&skel.voxels[m]) {
                *c += v as f64;
            }
        }
        coord.iter_mut().for_each(|c| *c /= members.len() as f64);
        nodes.push(Node { id, kind, members, coord });
    };

    for i in 0..n {
        if node_of[i] != usize::MAX {
            continue;
        }
        if degree[i] == 1 {
            push_node(vec![i], NodeKind::Endpoint, &mut node_of);
        } else if degree[i] >= 3 {
            // merge the 26-connected cluster of branch voxels
            let mut members = vec![i];
            let mut seen: HashSet<usize> = HashSet::from([i]);
            let mut k = 0;
            while k < members.len() {
                for &j in &skel.adjacency[members[k]] {
                    if degree[j] >= 3 && seen.insert(j) {
                        members.push(j);
                    }
                }
                k += 1;
            }
            members.sort_unstable();
            push_node(members, NodeKind::Branchpoint, &mut node_of);
        }
    }

    let mut segments: Vec<Segment> = Vec::new();
    let mut on_path = vec![false; n];
    let mut direct: HashSet<(usize, usize)> = HashSet::new();
    for node in 0..nodes.len() {
        let members = nodes[node].members.clone();
        for &start in &members {
            for &first in &skel.adjacency[start] {
                if node_of[first] == node {
                    continue;
                }
                if node_of[first] != usize::MAX {
                    // two nodes touching directly
                    let key = (start.min(first), start.max(first));
                    if direct.insert(key) {
                        segments.push(make_segment(skel, spacing, vec![start, first], (Some(node), Some(node_of[first])), false));
                    }
                    continue;
                }
                if on_path[first] {
                    continue;
                }
                let mut path = vec![start, first];
                on_path[first] = true;
                let (mut prev, mut cur) = (start, first);
                let end = loop {
                    let next = skel.adjacency[cur].iter().copied().find(|&j| j != prev);
                    match next {
                        Some(j) if node_of[j] != usize::MAX => {
                            path.push(j);
                            break Some(node_of[j]);
                        }
                        Some(j) if !on_path[j] => {
                            on_path[j] = true;
                            path.push(j);
                            prev = cur;
                            cur = j;
                        }
                        _ => break None,
                    }
                };
                segments.push(make_segment(skel, spacing, path, (Some(node), end), false));
            }
        }
    }

    // a node cluster with no incident segment still counts as one segment
    let touched: HashSet<usize> = segments.iter().flat_map(|s| [s.node_a, s.node_b]).flatten().collect();
    for node in 0..nodes.len() {
        if !touched.contains(&node) {
            segments.push(make_segment(skel, spacing, nodes[node].members.clone(), (Some(node), Some(node)), false));
        }
    }

    // leftovers: isolated cycles and isolated voxels
    for i in 0..n {
        if node_of[i] != usize::MAX || on_path[i] {
            continue;
        }
        on_path[i] = true;
        let mut path = vec![i];
        let (mut prev, mut cur) = (usize::MAX, i);
        while let Some(j) = skel.adjacency[cur].iter().copied().find(|&j| j != prev && !on_path[j]) {
            on_path[j] = true;
            path.push(j);
            prev = cur;
            cur = j;
        }
        let closed = path.len() > 2;
        segments.push(make_segment(skel, spacing, path, (None, None), closed));
    }

    for (id, s) in segments.iter_mut().enumerate() {
        s.id = id;
    }
    VesselGraph { nodes, segments }
}

/// Removes terminal segments shorter than `min_length_mm` whose other end is
/// a branchpoint, returning the surviving skeleton voxel indices.
pub(crate) fn spur_voxels(graph: &VesselGraph, min_length_mm: f64) -> HashSet<usize> {
    let mut drop = HashSet::new();
    for s in &graph.segments {
        let kinds = [s.node_a, s.node_b].map(|n| n.map(|id| graph.nodes[id].kind));
        let terminal = kinds.contains(&Some(NodeKind::Endpoint)) && kinds.contains(&Some(NodeKind::Branchpoint));
        if terminal && s.length_mm < min_length_mm {
            for &v in &s.path {
                let is_branch = [s.node_a, s.node_b]
                    .iter()
                    .flatten()
                    .any(|&id| graph.nodes[id].kind == NodeKind::Branchpoint && graph.nodes[id].members.contains(&v));
                if !is_branch {
                    drop.insert(v);
                }
            }
        }
    }
    drop
}
