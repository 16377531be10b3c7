//! Feature front end + voxel classifier trained with the hard-region
//! adaptive loss on a few labeled phantoms; reports per-checkpoint
//! validation Dice and test metrics.
//!
//! cargo run --release --example supervised

use vesselforge::features::{FeatureConfig, FeatureExtractor, FeatureVolume};
use vesselforge::metrics::{metrics_csv, MetricSummary};
use vesselforge::model::{segment, train, TrainConfig};
use vesselforge::phantom::PhantomSpec;
use vesselforge::selftrain::Corpus;
use vesselforge::volume::{BinaryMask, VolumeGrid};

fn refs(v: &[(FeatureVolume, BinaryMask)]) -> Vec<(&FeatureVolume, &BinaryMask)> {
    v.iter().map(|(f, m)| (f, m)).collect()
}

fn main() -> vesselforge::Result<()> {
    let mut template = PhantomSpec {
        dims: [48, 48, 48],
        ..PhantomSpec::default()
    };
    template.tree.root_radius_mm = 3.0;
    template.tree.depth = 2;
    template.intensity.noise_sigma = 100.0;
    template.intensity.blur_sigma_vox = 0.7;
    let corpus = Corpus::from_phantoms(&template, [4, 0, 1, 3], 3)?;

    let grids: Vec<&VolumeGrid> = corpus.labeled.iter().map(|s| &s.grid).collect();
    let extractor = FeatureExtractor::fit(&grids, &FeatureConfig::default())?;
    println!("{} features per voxel", extractor.n_features());

    let feats = |scans: &[vesselforge::selftrain::Scan]| -> vesselforge::Result<Vec<(FeatureVolume, BinaryMask)>> {
        scans
            .iter()
            .map(|s| Ok((extractor.extract(&s.grid)?, s.mask.clone().unwrap())))
            .collect()
    };
    let labeled = feats(&corpus.labeled)?;
    let validation = feats(&corpus.validation)?;
    let config = TrainConfig {
        epochs: 400,
        checkpoint_every: 50,
        ..TrainConfig::default()
    };
    let outcome = train(&refs(&labeled), &refs(&validation), &config)?;
    for c in &outcome.checkpoints {
        println!("epoch {:>4}  val dice {:.4}", c.epoch, c.val_dice);
    }
    let best = outcome.best();
    println!("best epoch {}", best.epoch);

    let mut rows = Vec::new();
    for scan in &corpus.test {
        let pred = segment(&best.classifier, &extractor.extract(&scan.grid)?, config.binarize_threshold)?;
        rows.push((scan.id.clone(), MetricSummary::evaluate(&pred, scan.mask.as_ref().unwrap())?));
    }
    print!("{}", metrics_csv(&rows));
    Ok(())
}
