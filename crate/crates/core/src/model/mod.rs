//! Logistic voxel classifier over feature channels, trained with the
//! hard-region-adaptive cross-entropy and checkpointed SGD.

mod loss;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVolume;
use crate::volume::{BinaryMask, Dims, Spacing};

pub use loss::{hra_ce_gradient, hra_ce_loss, HraGradient, HraLoss, PROB_CLAMP};
pub use train::{train, train_on_pool, Checkpoint, LrSchedule, TrainConfig, TrainOutcome, VoxelPool};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelClassifier {
    #[serde(rename = "w")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: f64,
}

impl VoxelClassifier {
    pub fn zeros(n_features: usize) -> Self {
        VoxelClassifier {
            weights: vec![0.0; n_features],
            bias: 0.0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn logit(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    #[inline]
    pub fn prob(&self, f: &[f64]) -> f64 {
        sigmoid(self.logit(f))
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub(crate) fn check_features(&self, features: &FeatureVolume) -> Result<()> {
        if features.n_features() != self.n_features() {
            return Err(Error::FeatureMismatch {
                expected: self.n_features(),
                actual: features.n_features(),
            });
        }
        Ok(())
    }
}

/// Per-voxel vessel probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    pub dims: Dims,
    pub spacing: Spacing,
    pub probs: Vec<f64>,
}

pub fn predict_probs(classifier: &VoxelClassifier, features: &FeatureVolume) -> Result<ProbabilityVolume> {
    classifier.check_features(features)?;
    let probs = (0..features.n_voxels())
        .map(|i| classifier.prob(features.voxel(i)))
        .collect();
    Ok(ProbabilityVolume {
        dims: features.dims(),
        spacing: features.spacing(),
        probs,
    })
}

/// Vessel iff probability strictly exceeds `threshold`.
pub fn binarize(probs: &ProbabilityVolume, threshold: f64) -> BinaryMask {
    let bits = probs.probs.iter().map(|&p| p > threshold).collect();
    BinaryMask::new(probs.dims, probs.spacing, bits).expect("same length")
}

pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.5;

/// Predicts and binarizes in one pass.
pub fn segment(classifier: &VoxelClassifier, features: &FeatureVolume, threshold: f64) -> Result<BinaryMask> {
    Ok(binarize(&predict_probs(classifier, features)?, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(dims: Dims, f: usize, seed: u64) -> FeatureVolume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = crate::volume::voxel_count(dims) * f;
        let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureVolume::from_raw(dims, Spacing::default(), f, data).unwrap()
    }

    #[test]
    fn zero_classifier_is_half() {
        let f = random_features([2, 2, 2], 3, 1);
        let p = predict_probs(&VoxelClassifier::zeros(3), &f).unwrap();
        assert!(p.probs.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn saturated_bias() {
        let f = random_features([2, 2, 2], 3, 1);
        let c = VoxelClassifier { weights: vec![0.0; 3], bias: 50.0 };
        let p = predict_probs(&c, &f).unwrap();
        assert!(p.probs.iter().all(|&v| v >= 1.0 - 1e-20));
    }

    #[test]
    fn matches_scalar_loop() {
        let f = random_features([4, 4, 4], 5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = VoxelClassifier {
            weights: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        let p = predict_probs(&c, &f).unwrap();
        for i in 0..64 {
            let mut z = c.bias;
            for j in 0..5 {
                z += c.weights[j] * f.data()[i * 5 + j];
            }
            let expected = 1.0 / (1.0 + (-z).exp());
            assert!((p.probs[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_count_checked() {
        let f = random_features([2, 2, 2], 3, 1);
        assert!(predict_probs(&VoxelClassifier::zeros(4), &f).is_err());
    }

    #[test]
    fn binarize_is_strict() {
        let p = ProbabilityVolume { dims: [1, 1, 3], spacing: Spacing::default(), probs: vec![0.5; 3] };
        assert_eq!(binarize(&p, 0.5).count(), 0);
        let q = ProbabilityVolume { dims: [1, 1, 3], spacing: Spacing::default(), probs: vec![0.2, 0.9, 0.6] };
        assert_eq!(binarize(&q, 0.999).count(), 0);
        assert_eq!(binarize(&q, 0.5).bits(), &[false, true, true]);
    }
}
