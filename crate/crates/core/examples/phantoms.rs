//! Synthetic phantoms with known geometry: a straight tube and a branching
//! tree, written to disk next to their ground truth.
//!
//! cargo run --release --example phantoms -- [out_dir]

use std::path::PathBuf;

use vesselforge::phantom::{generate_tree_phantom, generate_tube_phantom, Axis, IntensitySpec, PhantomSpec};
use vesselforge::volume::{save_volume, Spacing};

fn main() -> vesselforge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "phantoms_out".into()));

    let spacing = Spacing::isotropic(0.5)?;
    let (tube_img, tube_mask, tube) = generate_tube_phantom(
        [40, 40, 120],
        spacing,
        2.0,
        Axis::X,
        50.0,
        &IntensitySpec::default(),
        7,
    )?;
    println!(
        "tube: analytic volume {:.4} ml, rasterized {:.4} ml ({} voxels)",
        tube.volume_mm3 / 1000.0,
        tube_mask.count() as f64 * spacing.voxel_volume() / 1000.0,
        tube_mask.count()
    );
    save_volume(&tube_img, &out.join("tube_image.vvol.json"))?;
    save_volume(&tube_mask, &out.join("tube.vvol.json"))?;

    let mut spec = PhantomSpec {
        dims: [64, 64, 64],
        ..PhantomSpec::default()
    };
    spec.tree.root_radius_mm = 2.5;
    spec.intensity.noise_sigma = 100.0;
    spec.intensity.blur_sigma_vox = 0.7;
    let (img, mask, truth) = generate_tree_phantom(&spec)?;
    println!(
        "tree: {} segments, {} endpoints, {} branchpoints, {:.1} mm total length, valid={}",
        truth.n_segments,
        truth.n_endpoints,
        truth.n_branchpoints,
        truth.total_length_mm,
        truth.is_valid()
    );
    let (lo, hi) = img.min_max();
    println!("tree image intensity range [{lo:.0}, {hi:.0}], vessel fraction {:.3}", mask.count() as f64 / mask.len() as f64);
    save_volume(&img, &out.join("tree_image.vvol.json"))?;
    save_volume(&mask, &out.join("tree.vvol.json"))?;
    std::fs::write(out.join("tree.truth.json"), serde_json::to_string_pretty(&truth).unwrap())
        .map_err(|e| vesselforge::Error::Io { path: out.clone(), source: e })?;
    println!("wrote {}", out.display());
    Ok(())
}
