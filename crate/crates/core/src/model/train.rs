use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::gradient_over;
use super::{segment, VoxelClassifier};
use crate::error::{Error, Result};
use crate::features::FeatureVolume;
use crate::metrics::{confusion, dsc};
use crate::volume::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `lr * (1 - epoch / epochs)^0.9`
    #[default]
    Poly,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    /// Voxel samples per SGD step.
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub hra_threshold: f64,
    pub checkpoint_every: usize,
    /// Cap on sampled voxels per class per scan when building the pool.
    pub pool_per_class: usize,
    /// Share of the background pool drawn from the shell within
    /// `near_background_radius_vox` (Chebyshev) of labeled vessel.
    pub near_background_fraction: f64,
    pub near_background_radius_vox: usize,
    pub binarize_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.99,
            weight_decay: 3e-5,
            epochs: 1000,
            lr_schedule: LrSchedule::Poly,
            batch_size: 4096,
            steps_per_epoch: 1,
            hra_threshold: 0.1,
            checkpoint_every: 100,
            pool_per_class: 4000,
            near_background_fraction: 0.5,
            near_background_radius_vox: 1,
            binarize_threshold: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.hra_threshold) {
            return fail("hra_threshold must lie in [0, 1)");
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every must be at least 1");
        }
        if self.epochs < self.checkpoint_every {
            return fail("epochs must be at least checkpoint_every");
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 || self.pool_per_class == 0 {
            return fail("batch_size, steps_per_epoch and pool_per_class must be positive");
        }
        if !(0.0..=1.0).contains(&self.near_background_fraction) {
            return fail("near_background_fraction must lie in [0, 1]");
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return fail("binarize_threshold must lie in (0, 1)");
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Poly => self.learning_rate * (1.0 - epoch as f64 / self.epochs as f64).powf(0.9),
        }
    }

    pub fn checkpoint_count(&self) -> usize {
        self.epochs / self.checkpoint_every
    }
}

/// Voxels within Chebyshev distance `r` of the mask (mask included).
fn dilate_box(mask: &BinaryMask, r: usize) -> Vec<bool> {
    let dims = mask.dims();
    let mut cur = mask.bits().to_vec();
    let strides = [dims[1] * dims[2], dims[2], 1];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let mut next = vec![false; cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let pos = (i / stride) % n;
            let lo = pos.saturating_sub(r);
            let hi = (pos + r).min(n - 1);
            *out = (lo..=hi).any(|p| cur[i - pos * stride + p * stride]);
        }
        cur = next;
    }
    cur
}

/// Labeled feature rows sampled from training scans, split by class.
#[derive(Clone, Debug, Default)]
pub struct VoxelPool {
    n_features: usize,
    rows: Vec<f64>,
    labels: Vec<bool>,
    vessel: Vec<usize>,
    background: Vec<usize>,
}

impl VoxelPool {
    pub fn new(n_features: usize) -> Self {
        VoxelPool {
            n_features,
            ..Default::default()
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.vessel.len() + self.background.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_vessel(&self) -> usize {
        self.vessel.len()
    }

    pub fn n_background(&self) -> usize {
        self.background.len()
    }

    pub fn push(&mut self, row: &[f64], vessel: bool) {
        let idx = self.rows.len() / self.n_features.max(1);
        self.rows.extend_from_slice(row);
        self.labels.push(vessel);
        if vessel {
            self.vessel.push(idx);
        } else {
            self.background.push(idx);
        }
    }

    /// Appends all rows of `other`, keeping their order.
    pub fn append(&mut self, other: &VoxelPool) -> Result<()> {
        if other.n_features != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                actual: other.n_features,
            });
        }
        for (i, &l) in other.labels.iter().enumerate() {
            self.push(other.row(i), l);
        }
        Ok(())
    }

    fn row(&self, idx: usize) -> &[f64] {
        &self.rows[idx * self.n_features..(idx + 1) * self.n_features]
    }

    /// Adds up to `per_class` uniformly drawn voxels of each class.
    pub fn add_scan(&mut self, features: &FeatureVolume, labels: &BinaryMask, per_class: usize, rng: &mut impl Rng) -> Result<()> {
        self.add_scan_stratified(features, labels, per_class, 0.0, 0, rng)
    }

    /// Like [`add_scan`](Self::add_scan), but `near_fraction` of the
    /// background draws come from voxels within `radius` (Chebyshev) of a
    /// vessel voxel, the rest from the far background. Either stratum
    /// lends its unused quota to the other.
    pub fn add_scan_stratified(
        &mut self,
        features: &FeatureVolume,
        labels: &BinaryMask,
        per_class: usize,
        near_fraction: f64,
        radius: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        if features.n_features() != self.n_features {
            return Err(Error::FeatureMismatch {
                expected: self.n_features,
                actual: features.n_features(),
            });
        }
        labels.check_same_dims(features.dims())?;
        let near = if near_fraction > 0.0 && radius > 0 {
            dilate_box(labels, radius)
        } else {
            vec![false; labels.len()]
        };
        let bits = labels.bits();
        let collect = |keep: &dyn Fn(usize) -> bool| (0..bits.len()).filter(|&i| keep(i)).collect::<Vec<usize>>();
        let vessel = collect(&|i| bits[i]);
        let shell = collect(&|i| !bits[i] && near[i]);
        let far = collect(&|i| !bits[i] && !near[i]);

        let want_shell = (per_class as f64 * near_fraction).round() as usize;
        let take_shell = want_shell.min(shell.len());
        let take_far = (per_class - take_shell).min(far.len());
        let take_shell = (per_class - take_far).min(shell.len());
        let take_vessel = per_class.min(vessel.len());
        for (members, take, class) in [(&vessel, take_vessel, true), (&shell, take_shell, false), (&far, take_far, false)] {
            let mut picked = sample(rng, members.len(), take).into_vec();
            picked.sort_unstable();
            for k in picked {
                self.push(features.voxel(members[k]), class);
            }
        }
        Ok(())
    }

    /// Half vessel, half background, drawn with replacement; falls back to
    /// the available class when one is missing.
    fn minibatch(&self, size: usize, rng: &mut impl Rng) -> Vec<usize> {
        let n_vessel = if self.background.is_empty() {
            size
        } else if self.vessel.is_empty() {
            0
        } else {
            size / 2
        };
        let mut out = Vec::with_capacity(size);
        for k in 0..size {
            let from = if k < n_vessel { &self.vessel } else { &self.background };
            out.push(from[rng.random_range(0..from.len())]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    #[serde(flatten)]
    pub classifier: VoxelClassifier,
    pub val_dice: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    /// Index of the checkpoint with the highest validation Dice.
    pub best: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &Checkpoint {
        &self.checkpoints[self.best]
    }
}

fn validation_dice(classifier: &VoxelClassifier, val: &[(&FeatureVolume, &BinaryMask)], threshold: f64) -> Result<f64> {
    let mut total = 0.0;
    for (features, labels) in val {
        let pred = segment(classifier, features, threshold)?;
        total += dsc(&confusion(&pred, labels)?);
    }
    Ok(total / val.len() as f64)
}

/// Trains from a zero-initialized classifier on voxels pooled from `train`.
pub fn train(
    train: &[(&FeatureVolume, &BinaryMask)],
    val: &[(&FeatureVolume, &BinaryMask)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = train.first().ok_or(Error::EmptySplit("training"))?;
    let mut pool = VoxelPool::new(first.0.n_features());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x706f_6f6c);
    for (features, labels) in train {
        pool.add_scan_stratified(
            features,
            labels,
            config.pool_per_class,
            config.near_background_fraction,
            config.near_background_radius_vox,
            &mut rng,
        )?;
    }
    train_on_pool(&pool, val, config)
}

/// SGD with classical momentum and L2 weight decay on balanced minibatches.
pub fn train_on_pool(pool: &VoxelPool, val: &[(&FeatureVolume, &BinaryMask)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let f = pool.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut classifier = VoxelClassifier::zeros(f);
    let mut velocity_w = vec![0.0; f];
    let mut velocity_b = 0.0;
    let mut checkpoints = Vec::with_capacity(config.checkpoint_count());

    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch - 1);
        for _ in 0..config.steps_per_epoch {
            let batch = pool.minibatch(config.batch_size, &mut rng);
            let grad = gradient_over(
                &classifier,
                batch.iter().map(|&i| (pool.row(i), pool.labels[i])),
                config.hra_threshold,
            );
            if !grad.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            for ((w, v), g) in classifier.weights.iter_mut().zip(&mut velocity_w).zip(&grad.weights) {
                *v = config.momentum * *v + g + config.weight_decay * *w;
                *w -= lr * *v;
            }
            velocity_b = config.momentum * velocity_b + grad.bias;
            classifier.bias -= lr * velocity_b;
            if !classifier.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        if epoch % config.checkpoint_every == 0 {
            let val_dice = validation_dice(&classifier, val, config.binarize_threshold)?;
            log::debug!("epoch {epoch}: validation dice {val_dice:.4}");
            checkpoints.push(Checkpoint {
                epoch,
                classifier: classifier.clone(),
                val_dice,
            });
        }
    }

    let mut best = 0;
    for (i, c) in checkpoints.iter().enumerate() {
        if c.val_dice > checkpoints[best].val_dice {
            best = i;
        }
    }
    Ok(TrainOutcome { checkpoints, best })
}
