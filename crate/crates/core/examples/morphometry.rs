//! Quantification of a vessel mask: distance map radii, thinning, centerline
//! graph, and the scalar report (TBV, BV5, counts, radius histogram).
//!
//! cargo run --release --example morphometry

use vesselforge::morphometry::{analyze, graph_csv, report_csv, MorphometryOptions};
use vesselforge::phantom::{generate_tree_phantom, generate_tube_phantom, Axis, IntensitySpec, PhantomSpec};
use vesselforge::volume::Spacing;

fn main() -> vesselforge::Result<()> {
    let (_, tube, record) = generate_tube_phantom(
        [40, 40, 120],
        Spacing::isotropic(0.5)?,
        2.0,
        Axis::X,
        50.0,
        &IntensitySpec::default(),
        0,
    )?;
    let tube_a = analyze(&tube, &MorphometryOptions::default())?;
    println!("tube analytic volume {:.4} ml", record.volume_mm3 / 1000.0);

    let mut spec = PhantomSpec {
        dims: [64, 64, 64],
        ..PhantomSpec::default()
    };
    spec.tree.root_radius_mm = 2.5;
    let (_, tree, truth) = generate_tree_phantom(&spec)?;
    let tree_a = analyze(&tree, &MorphometryOptions::default())?;
    println!(
        "tree truth: {} segments, {} endpoints, {} branchpoints",
        truth.n_segments, truth.n_endpoints, truth.n_branchpoints
    );

    print!(
        "{}",
        report_csv(&[("tube".into(), tube_a.report.clone()), ("tree".into(), tree_a.report.clone())])
    );
    println!("\ntree centerline graph ({} skeleton voxels):", tree_a.skeleton.len());
    print!("{}", graph_csv(&tree_a.graph));
    Ok(())
}
