//! Hard-region-adaptive cross-entropy.
//!
//! A voxel enters the loss only when `|y - p| > T`. The loss is the binary
//! cross-entropy averaged over the selected voxels (zero when none are
//! selected). With `T = 0` every mispredicted voxel is selected.

use super::{ProbabilityVolume, VoxelClassifier};
use crate::error::{Error, Result};
use crate::features::FeatureVolume;
use crate::volume::BinaryMask;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct HraLoss {
    pub loss: f64,
    pub selected: BinaryMask,
    pub selected_count: usize,
}

#[inline]
pub(crate) fn gate(y: bool, p: f64, threshold: f64) -> bool {
    ((y as u8 as f64) - p).abs() > threshold
}

#[inline]
pub(crate) fn cross_entropy(y: bool, p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// d(CE)/d(logit), zero where the clamp is active.
#[inline]
pub(crate) fn cross_entropy_dlogit(y: bool, p: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    p - (y as u8 as f64)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!("HRA threshold {threshold} outside [0, 1)")));
    }
    Ok(())
}

pub fn hra_ce_loss(probs: &ProbabilityVolume, labels: &BinaryMask, threshold: f64) -> Result<HraLoss> {
    check_threshold(threshold)?;
    labels.check_same_dims(probs.dims)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    let bits: Vec<bool> = probs
        .probs
        .iter()
        .zip(labels.bits())
        .map(|(&p, &y)| {
            let on = gate(y, p, threshold);
            if on {
                sum += cross_entropy(y, p);
                count += 1;
            }
            on
        })
        .collect();
    Ok(HraLoss {
        loss: sum / count.max(1) as f64,
        selected: BinaryMask::new(probs.dims, probs.spacing, bits)?,
        selected_count: count,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HraGradient {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: f64,
    pub selected_count: usize,
}

/// Exact gradient of the selected-voxel mean cross-entropy with respect to
/// `(w, b)`, holding the selection gate fixed at the current prediction.
/// `subset` restricts evaluation to the listed voxel indices.
pub fn hra_ce_gradient(
    classifier: &VoxelClassifier,
    features: &FeatureVolume,
    labels: &BinaryMask,
    threshold: f64,
    subset: Option<&[usize]>,
) -> Result<HraGradient> {
    check_threshold(threshold)?;
    classifier.check_features(features)?;
    labels.check_same_dims(features.dims())?;
    let all: Vec<usize>;
    let indices = match subset {
        Some(s) => s,
        None => {
            all = (0..features.n_voxels()).collect();
            &all
        }
    };
    let rows = indices.iter().map(|&i| (features.voxel(i), labels.bits()[i]));
    Ok(gradient_over(classifier, rows, threshold))
}

pub(crate) fn gradient_over<'a>(
    classifier: &VoxelClassifier,
    rows: impl Iterator<Item = (&'a [f64], bool)>,
    threshold: f64,
) -> HraGradient {
    let mut gw = vec![0.0; classifier.n_features()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    let mut count = 0usize;
    for (f, y) in rows {
        let p = classifier.prob(f);
        if !gate(y, p, threshold) {
            continue;
        }
        count += 1;
        loss += cross_entropy(y, p);
        let d = cross_entropy_dlogit(y, p);
        for (g, &x) in gw.iter_mut().zip(f) {
            *g += d * x;
        }
        gb += d;
    }
    let norm = count.max(1) as f64;
    gw.iter_mut().for_each(|g| *g /= norm);
    HraGradient {
        weights: gw,
        bias: gb / norm,
        loss: loss / norm,
        selected_count: count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predict_probs;
    use crate::volume::Spacing;

    fn pv(probs: Vec<f64>) -> ProbabilityVolume {
        ProbabilityVolume { dims: [1, 1, probs.len()], spacing: Spacing::default(), probs }
    }

    fn mask(bits: &[bool]) -> BinaryMask {
        BinaryMask::new([1, 1, bits.len()], Spacing::default(), bits.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_selects_nothing() {
        let e = 1e-3;
        let out = hra_ce_loss(&pv(vec![e, 1.0 - e, 1.0 - e]), &mask(&[false, true, true]), 0.1).unwrap();
        assert_eq!(out.selected_count, 0);
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn hand_computed_pairs() {
        let y = [true, true, false, false, true, false, true, false];
        let p = [0.95, 0.85, 0.05, 0.3, 0.5, 0.09, 0.91, 0.08];
        // |y - p| > 0.1 for: (1, 0.85), (0, 0.3), (1, 0.5)
        let expected = (-(0.85f64).ln() - (0.7f64).ln() - (0.5f64).ln()) / 3.0;
        let out = hra_ce_loss(&pv(p.to_vec()), &mask(&y), 0.1).unwrap();
        assert_eq!(out.selected_count, 3);
        assert!((out.loss - expected).abs() < 1e-12);
        assert_eq!(out.selected.bits(), &[false, true, false, true, true, false, false, false]);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(hra_ce_loss(&pv(vec![0.5]), &mask(&[true]), 1.0).is_err());
        assert!(hra_ce_loss(&pv(vec![0.5]), &mask(&[true]), -0.1).is_err());
    }

    #[test]
    fn empty_selection_zero_gradient() {
        let f = FeatureVolume::from_raw([1, 1, 2], Spacing::default(), 1, vec![1.0, -1.0]).unwrap();
        let c = VoxelClassifier { weights: vec![10.0], bias: 0.0 };
        let g = hra_ce_gradient(&c, &f, &mask(&[true, false]), 0.1, None).unwrap();
        assert_eq!(g.selected_count, 0);
        assert_eq!(g.weights, vec![0.0]);
        assert_eq!(g.bias, 0.0);
    }

    #[test]
    fn single_voxel_closed_form() {
        let f = FeatureVolume::from_raw([1, 1, 1], Spacing::default(), 2, vec![0.7, -1.3]).unwrap();
        let c = VoxelClassifier { weights: vec![0.4, 0.2], bias: -0.1 };
        let p = predict_probs(&c, &f).unwrap().probs[0];
        let g = hra_ce_gradient(&c, &f, &mask(&[true]), 0.0, None).unwrap();
        assert!((g.weights[0] - (p - 1.0) * 0.7).abs() < 1e-12);
        assert!((g.weights[1] - (p - 1.0) * -1.3).abs() < 1e-12);
        assert!((g.bias - (p - 1.0)).abs() < 1e-12);
    }
}
