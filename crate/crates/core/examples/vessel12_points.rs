//! Sparse `x, y, z, label` point annotations rasterized into a mask, then
//! scored against a dense reference at the annotated voxels only.
//!
//! cargo run --release --example vessel12_points

use vesselforge::phantom::{generate_tree_phantom, PhantomSpec};
use vesselforge::volume::{parse_vessel12_points, points_to_mask, unravel};

fn main() -> vesselforge::Result<()> {
    let spec = PhantomSpec {
        dims: [48, 48, 48],
        ..PhantomSpec::default()
    };
    let (_, mask, _) = generate_tree_phantom(&spec)?;

    // annotate every 97th voxel, labeled from the phantom truth
    let mut csv = String::new();
    for i in (0..mask.len()).step_by(97) {
        let [z, y, x] = unravel(mask.dims(), i);
        csv.push_str(&format!("{x}, {y}, {z}, {}\n", mask.bits()[i] as u8));
    }
    let points = parse_vessel12_points(&csv, mask.dims())?;
    let sparse = points_to_mask(&points, mask.dims(), mask.spacing());
    let vessel = points.iter().filter(|p| p.vessel).count();
    println!("{} points, {} vessel, {} voxels set in the sparse mask", points.len(), vessel, sparse.count());

    let agree = points.iter().filter(|p| mask.bits()[p.index] == p.vessel).count();
    println!("point-wise agreement with the dense mask: {agree}/{}", points.len());

    match parse_vessel12_points("1, 2, 999, 1\n", mask.dims()) {
        Err(e) => println!("out-of-range row rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
