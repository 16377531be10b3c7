use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_partition, score_scan, select_reliable, CandidateScore, SelectionPolicy, Selection};
use crate::augment::{apply_weak, apply_weak_then_strong, AugmentationSpec};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureExtractor, FeatureVolume};
use crate::metrics::MetricSummary;
use crate::model::{segment, train_on_pool, Checkpoint, TrainConfig, TrainOutcome, VoxelPool};
use crate::volume::{remove_small_components, BinaryMask, Connectivity, VolumeGrid};

/// Mixes a tag into a seed (FNV-1a of the tag, then a splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub id: String,
    pub grid: VolumeGrid,
    /// Ground truth; absent for unlabeled scans.
    pub mask: Option<BinaryMask>,
}

impl Scan {
    pub fn labeled(id: impl Into<String>, grid: VolumeGrid, mask: BinaryMask) -> Self {
        Scan {
            id: id.into(),
            grid,
            mask: Some(mask),
        }
    }

    pub fn unlabeled(id: impl Into<String>, grid: VolumeGrid) -> Self {
        Scan {
            id: id.into(),
            grid,
            mask: None,
        }
    }

    fn truth(&self) -> Result<&BinaryMask> {
        self.mask
            .as_ref()
            .ok_or_else(|| Error::Config(format!("scan {} needs a ground-truth mask", self.id)))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub labeled: Vec<Scan>,
    pub unlabeled: Vec<Scan>,
    pub validation: Vec<Scan>,
    pub test: Vec<Scan>,
}

impl Corpus {
    pub fn validate(&self) -> Result<()> {
        for (name, split) in [("labeled", &self.labeled), ("validation", &self.validation), ("test", &self.test)] {
            if split.is_empty() {
                return Err(Error::EmptySplit(name));
            }
            for s in split {
                s.truth()?;
            }
        }
        let mut seen = HashSet::new();
        for s in self.labeled.iter().chain(&self.unlabeled).chain(&self.validation).chain(&self.test) {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate scan id {}", s.id)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub augmentation: AugmentationSpec,
    pub selection: SelectionPolicy,
    /// Number of trailing checkpoints scored per scan.
    pub k_checkpoints: usize,
    /// Augmented copies of each training scan per stage.
    pub views_per_scan: usize,
    /// Re-initialize and train on labeled + every pseudo-labeled scan at the end.
    pub final_retrain: bool,
    /// Probability threshold for candidate masks and pseudo labels; test
    /// metrics use `train.binarize_threshold`.
    pub pseudo_threshold: f64,
    /// Pseudo labels drop 26-connected components smaller than this; 0 keeps them as predicted.
    pub pseudo_min_component_voxels: usize,
    pub seed: u64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
            augmentation: AugmentationSpec::default(),
            selection: SelectionPolicy::default(),
            k_checkpoints: 5,
            views_per_scan: 1,
            final_retrain: true,
            pseudo_threshold: 0.5,
            pseudo_min_component_voxels: 0,
            seed: 0,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.augmentation.validate()?;
        self.selection.validate()?;
        if self.k_checkpoints < 2 || self.k_checkpoints > self.train.checkpoint_count() {
            return Err(Error::Config(format!(
                "k_checkpoints must lie in [2, {}] (epochs / checkpoint_every), got {}",
                self.train.checkpoint_count(),
                self.k_checkpoints
            )));
        }
        if !(self.pseudo_threshold > 0.0 && self.pseudo_threshold < 1.0) {
            return Err(Error::Config("pseudo_threshold must lie in (0, 1)".into()));
        }
        if self.views_per_scan == 0 {
            return Err(Error::Config("views_per_scan must be at least 1".into()));
        }
        Ok(())
    }

    /// Feature front end seeded from the global seed.
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            seed: derive_seed(self.seed, "features"),
            ..self.features.clone()
        }
    }

    /// Turns a teacher prediction into a training label.
    pub fn clean_pseudo_label(&self, mask: BinaryMask) -> BinaryMask {
        if self.pseudo_min_component_voxels > 1 {
            remove_small_components(&mask, self.pseudo_min_component_voxels, Connectivity::TwentySix)
        } else {
            mask
        }
    }

    fn stage_train(&self, stage: &str) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, stage),
            ..self.train.clone()
        }
    }

    fn stage_augmentation(&self, stage: &str) -> AugmentationSpec {
        AugmentationSpec {
            seed: derive_seed(self.seed, &format!("{stage}/augment")),
            ..self.augmentation.clone()
        }
    }
}

fn scan_pool(
    extractor: &FeatureExtractor,
    grid: &VolumeGrid,
    labels: &BinaryMask,
    strong: bool,
    aug: &AugmentationSpec,
    tag: &str,
    cfg: &SelfTrainConfig,
) -> Result<VoxelPool> {
    let mut pool = VoxelPool::new(extractor.n_features());
    for v in 0..cfg.views_per_scan {
        let draw = derive_seed(aug.seed, &format!("{tag}/{v}"));
        let (g, m) = if strong {
            apply_weak_then_strong(grid, labels, aug, draw)?
        } else {
            apply_weak(grid, labels, aug, draw)?
        };
        let f = extractor.extract(&g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let t = &cfg.train;
        pool.add_scan_stratified(&f, &m, t.pool_per_class, t.near_background_fraction, t.near_background_radius_vox, &mut rng)?;
    }
    Ok(pool)
}

/// One training phase: labeled scans get A^w, pseudo-labeled scans A^s∘A^w.
/// The stage name seeds both the augmentation draws and SGD.
pub fn train_stage(
    extractor: &FeatureExtractor,
    labeled: &[&Scan],
    pseudo: &[(&Scan, &BinaryMask)],
    validation: &[(FeatureVolume, BinaryMask)],
    cfg: &SelfTrainConfig,
    stage: &str,
) -> Result<TrainOutcome> {
    if labeled.is_empty() {
        return Err(Error::EmptySplit("labeled"));
    }
    let aug = cfg.stage_augmentation(stage);
    let mut jobs: Vec<(&Scan, &BinaryMask, bool)> = Vec::new();
    for s in labeled {
        jobs.push((s, s.truth()?, false));
    }
    for (s, m) in pseudo {
        jobs.push((s, m, true));
    }
    let pools: Vec<VoxelPool> = jobs
        .par_iter()
        .map(|(s, m, strong)| scan_pool(extractor, &s.grid, m, *strong, &aug, &s.id, cfg))
        .collect::<Result<_>>()?;
    let mut pool = VoxelPool::new(extractor.n_features());
    for p in &pools {
        pool.append(p)?;
    }
    let val: Vec<(&FeatureVolume, &BinaryMask)> = validation.iter().map(|(f, m)| (f, m)).collect();
    train_on_pool(&pool, &val, &cfg.stage_train(stage))
}

/// Per-scan and mean test metrics of one classifier.
pub fn evaluate_scans(extractor: &FeatureExtractor, checkpoint: &Checkpoint, scans: &[Scan], threshold: f64) -> Result<Vec<(String, MetricSummary)>> {
    scans
        .par_iter()
        .map(|s| {
            let pred = segment(&checkpoint.classifier, &extractor.extract(&s.grid)?, threshold)?;
            Ok((s.id.clone(), MetricSummary::evaluate(&pred, s.truth()?)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub n_labeled: usize,
    pub n_pseudo: usize,
    /// Scores of the scans considered in this stage's selection.
    pub candidates: Vec<CandidateScore>,
    pub selection: Option<Selection>,
    /// True when nothing was selected and the previous model was kept.
    pub reused_previous: bool,
    pub best_epoch: usize,
    pub val_dice: f64,
    pub test: MetricSummary,
    pub test_per_scan: Vec<(String, MetricSummary)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub selection: SelectionPolicy,
    pub baseline: StageReport,
    pub iterations: Vec<StageReport>,
    /// Re-initialized model trained on labeled + all pseudo-labeled scans.
    pub final_stage: Option<StageReport>,
}

impl PipelineReport {
    /// Test metrics of the model the pipeline returns.
    pub fn final_metrics(&self) -> &MetricSummary {
        &self.last_stage().test
    }

    pub fn last_stage(&self) -> &StageReport {
        self.final_stage
            .as_ref()
            .or(self.iterations.last())
            .unwrap_or(&self.baseline)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub extractor: FeatureExtractor,
    /// Checkpoints of the last trained stage.
    pub training: TrainOutcome,
    pub report: PipelineReport,
}

impl PipelineOutcome {
    pub fn model(&self) -> &Checkpoint {
        self.training.best()
    }
}

#[allow(clippy::too_many_arguments)]
fn stage_report(
    stage: &str,
    outcome: &TrainOutcome,
    extractor: &FeatureExtractor,
    corpus: &Corpus,
    cfg: &SelfTrainConfig,
    n_pseudo: usize,
    candidates: Vec<CandidateScore>,
    selection: Option<Selection>,
) -> Result<StageReport> {
    let best = outcome.best();
    let per_scan = evaluate_scans(extractor, best, &corpus.test, cfg.train.binarize_threshold)?;
    let test = MetricSummary::mean(&per_scan.iter().map(|(_, m)| *m).collect::<Vec<_>>()).ok_or(Error::EmptySplit("test"))?;
    log::info!(
        "{stage}: pseudo {n_pseudo}, best epoch {}, val dice {:.4}, test dsc {:.4} precision {:.4}",
        best.epoch,
        best.val_dice,
        test.dsc,
        test.precision
    );
    Ok(StageReport {
        stage: stage.to_string(),
        n_labeled: corpus.labeled.len(),
        n_pseudo,
        candidates,
        selection,
        reused_previous: false,
        best_epoch: best.epoch,
        val_dice: best.val_dice,
        test,
        test_per_scan: per_scan,
    })
}

/// Teacher on labeled data, then one select-and-retrain round per policy
/// entry (each on the previous remainder), then an optional re-initialized
/// final model on labeled + selected + remainder.
pub fn run_pipeline(corpus: &Corpus, cfg: &SelfTrainConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    corpus.validate()?;
    let labeled_grids: Vec<&VolumeGrid> = corpus.labeled.iter().map(|s| &s.grid).collect();
    let extractor = FeatureExtractor::fit(&labeled_grids, &cfg.feature_config())?;
    let validation: Vec<(FeatureVolume, BinaryMask)> = corpus
        .validation
        .iter()
        .map(|s| Ok((extractor.extract(&s.grid)?, s.truth()?.clone())))
        .collect::<Result<_>>()?;
    let labeled: Vec<&Scan> = corpus.labeled.iter().collect();
    let threshold = cfg.pseudo_threshold;

    let mut teacher = train_stage(&extractor, &labeled, &[], &validation, cfg, "baseline")?;
    let baseline = stage_report("baseline", &teacher, &extractor, corpus, cfg, 0, Vec::new(), None)?;
    let mut last_report = baseline.clone();

    let mut pseudo: Vec<(&Scan, BinaryMask)> = Vec::new();
    let mut remaining: Vec<&Scan> = corpus.unlabeled.iter().collect();
    let mut iterations = Vec::new();
    for it in 0..cfg.selection.iterations.len() {
        let stage = format!("iteration_{}", it + 1);
        let ck = &teacher.checkpoints;
        let trailing = &ck[ck.len() - cfg.k_checkpoints..];
        let best = teacher.best();
        let mut candidates = remaining
            .par_iter()
            .map(|s| score_scan(&s.id, &extractor.extract(&s.grid)?, trailing, best, threshold))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<CandidateScore> = candidates.iter().map(|c| c.score()).collect();
        let selection = select_reliable(&scores, &cfg.selection, it)?;
        check_partition(&remaining.iter().map(|s| s.id.clone()).collect::<Vec<_>>(), &selection)?;
        log::info!("{stage}: selected {} of {}", selection.selected.len(), remaining.len());

        let mut next_remaining = Vec::new();
        for (scan, cand) in remaining.iter().zip(candidates.iter_mut()) {
            if selection.selected.contains(&scan.id) {
                let reference = std::mem::replace(&mut cand.reference, BinaryMask::empty([0, 0, 0], scan.grid.spacing()));
                pseudo.push((scan, cfg.clean_pseudo_label(reference)));
            } else {
                next_remaining.push(*scan);
            }
        }
        drop(candidates);
        remaining = next_remaining;

        if selection.selected.is_empty() {
            let mut r = last_report.clone();
            r.stage = stage;
            r.candidates = scores;
            r.selection = Some(selection);
            r.reused_previous = true;
            iterations.push(r);
            continue;
        }
        let pairs: Vec<(&Scan, &BinaryMask)> = pseudo.iter().map(|(s, m)| (*s, m)).collect();
        let student = train_stage(&extractor, &labeled, &pairs, &validation, cfg, &stage)?;
        let r = stage_report(&stage, &student, &extractor, corpus, cfg, pairs.len(), scores, Some(selection))?;
        last_report = r.clone();
        iterations.push(r);
        teacher = student;
    }

    let mut final_stage = None;
    if cfg.final_retrain {
        // the remainder is labeled by the latest teacher
        let best = teacher.best().clone();
        let extra: Vec<BinaryMask> = remaining
            .par_iter()
            .map(|s| Ok(cfg.clean_pseudo_label(segment(&best.classifier, &extractor.extract(&s.grid)?, threshold)?)))
            .collect::<Result<_>>()?;
        let mut pairs: Vec<(&Scan, &BinaryMask)> = pseudo.iter().map(|(s, m)| (*s, m)).collect();
        pairs.extend(remaining.iter().copied().zip(extra.iter()));
        let outcome = train_stage(&extractor, &labeled, &pairs, &validation, cfg, "final")?;
        final_stage = Some(stage_report("final", &outcome, &extractor, corpus, cfg, pairs.len(), Vec::new(), None)?);
        teacher = outcome;
    }

    Ok(PipelineOutcome {
        extractor,
        training: teacher,
        report: PipelineReport {
            seed: cfg.seed,
            selection: cfg.selection.clone(),
            baseline,
            iterations,
            final_stage,
        },
    })
}

impl Corpus {
    /// Tree phantoms from one template, each with its own derived seed.
    /// Split sizes are `[labeled, unlabeled, validation, test]`.
    pub fn from_phantoms(template: &crate::phantom::PhantomSpec, sizes: [usize; 4], seed: u64) -> Result<Self> {
        let names = ["labeled", "unlabeled", "validation", "test"];
        let mut jobs = Vec::new();
        for (split, (&n, name)) in sizes.iter().zip(names).enumerate() {
            for i in 0..n {
                jobs.push((split, format!("{name}{i:03}")));
            }
        }
        let scans: Vec<(usize, Scan)> = jobs
            .into_par_iter()
            .map(|(split, id)| {
                let spec = crate::phantom::PhantomSpec {
                    seed: derive_seed(seed, &id),
                    ..template.clone()
                };
                let (grid, mask, _) = crate::phantom::generate_tree_phantom(&spec)?;
                let scan = if split == 1 { Scan::unlabeled(id, grid) } else { Scan::labeled(id, grid, mask) };
                Ok((split, scan))
            })
            .collect::<Result<_>>()?;
        let mut corpus = Corpus::default();
        for (split, scan) in scans {
            match split {
                0 => corpus.labeled.push(scan),
                1 => corpus.unlabeled.push(scan),
                2 => corpus.validation.push(scan),
                _ => corpus.test.push(scan),
            }
        }
        Ok(corpus)
    }
}
