//! Weak (rigid + mirror + scale) and strong (elastic + gamma) augmentation
//! of an image/mask pair. The mask stays binary and moves with the image.
//!
//! cargo run --release --example augmentation

use vesselforge::augment::{apply_strong, apply_weak, apply_weak_then_strong, AugmentationSpec};
use vesselforge::metrics::{confusion, dsc};
use vesselforge::phantom::{generate_tree_phantom, PhantomSpec};

fn main() -> vesselforge::Result<()> {
    let spec = PhantomSpec {
        dims: [48, 48, 48],
        ..PhantomSpec::default()
    };
    let (img, mask, _) = generate_tree_phantom(&spec)?;
    let aug = AugmentationSpec { seed: 11, ..Default::default() };

    println!("draw  op            vessel_voxels  dice_vs_original  intensity_range");
    for draw in 0..3u64 {
        for (name, (g, m)) in [
            ("weak", apply_weak(&img, &mask, &aug, draw)?),
            ("strong", apply_strong(&img, &mask, &aug, draw)?),
            ("weak+strong", apply_weak_then_strong(&img, &mask, &aug, draw)?),
        ] {
            let (lo, hi) = g.min_max();
            println!(
                "{draw:>4}  {name:<12}  {:>13}  {:>16.3}  [{lo:.0}, {hi:.0}]",
                m.count(),
                dsc(&confusion(&m, &mask)?)
            );
        }
    }
    // same seed and draw index, same output
    let a = apply_weak_then_strong(&img, &mask, &aug, 5)?;
    let b = apply_weak_then_strong(&img, &mask, &aug, 5)?;
    println!("repeatable: {}", a == b);
    Ok(())
}
