//! Teacher–student self-training: checkpoint-stability scoring of pseudo
//! labels, the per-iteration reliability filter, and the full loop.

mod pipeline;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVolume;
use crate::metrics::{confusion, dsc, iou, precision, ConfusionCounts};
use crate::model::{segment, Checkpoint};
use crate::volume::BinaryMask;

pub use pipeline::{
    derive_seed, evaluate_scans, run_pipeline, train_stage, Corpus, PipelineOutcome, PipelineReport, Scan, SelfTrainConfig, StageReport,
};

/// Stability: Σ_{j<K} IoU(M_j, M_K) with the last mask as reference.
pub fn stability_score(masks: &[BinaryMask]) -> Result<f64> {
    if masks.len() < 2 {
        return Err(Error::TooFewCheckpoints(masks.len()));
    }
    let (last, early) = masks.split_last().unwrap();
    let mut s = 0.0;
    for m in early {
        s += iou(&confusion(m, last)?);
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementMetric {
    Precision,
    Dice,
}

fn agreement(c: &ConfusionCounts, metric: AgreementMetric) -> Result<f64> {
    match metric {
        AgreementMetric::Precision => precision(c),
        AgreementMetric::Dice => Ok(dsc(c)),
    }
}

/// Mean of `metric(mask_j, reference)` with each checkpoint mask as the
/// prediction and the reference as ground truth.
pub fn mean_agreement(masks: &[BinaryMask], reference: &BinaryMask, metric: AgreementMetric) -> Result<f64> {
    if masks.is_empty() {
        return Err(Error::TooFewCheckpoints(0));
    }
    let mut total = 0.0;
    for m in masks {
        total += agreement(&confusion(m, reference)?, metric)?;
    }
    Ok(total / masks.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelCandidate {
    pub id: String,
    /// One binarized prediction per checkpoint, oldest first.
    pub masks: Vec<BinaryMask>,
    /// Best-checkpoint prediction; becomes the pseudo label if selected.
    pub reference: BinaryMask,
    pub stability: f64,
    pub mean_precision: f64,
    pub mean_dice: f64,
}

/// Serializable part of a candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: String,
    pub stability: f64,
    pub mean_precision: f64,
    pub mean_dice: f64,
}

impl PseudoLabelCandidate {
    pub fn score(&self) -> CandidateScore {
        CandidateScore {
            id: self.id.clone(),
            stability: self.stability,
            mean_precision: self.mean_precision,
            mean_dice: self.mean_dice,
        }
    }
}

pub const CANDIDATE_CSV_HEADER: &str = "scan_id,stability,mean_precision,mean_dice";

pub fn candidates_csv(scores: &[CandidateScore]) -> String {
    let mut out = String::from(CANDIDATE_CSV_HEADER);
    out.push('\n');
    for s in scores {
        out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", s.id, s.stability, s.mean_precision, s.mean_dice));
    }
    out
}

/// Scores one unlabeled scan. A checkpoint predicting no vessel at all has
/// undefined precision against a non-empty reference; it counts as 0 (and 1
/// when the reference is empty too), the same convention as the metric table.
pub fn score_scan(id: &str, features: &FeatureVolume, checkpoints: &[Checkpoint], best: &Checkpoint, threshold: f64) -> Result<PseudoLabelCandidate> {
    if checkpoints.len() < 2 {
        return Err(Error::TooFewCheckpoints(checkpoints.len()));
    }
    let masks: Vec<BinaryMask> = checkpoints
        .iter()
        .map(|c| segment(&c.classifier, features, threshold))
        .collect::<Result<_>>()?;
    let reference = segment(&best.classifier, features, threshold)?;
    let stability = stability_score(&masks)?;
    let mut prec = 0.0;
    let mut dice = 0.0;
    for m in &masks {
        let c = confusion(m, &reference)?;
        prec += precision(&c).unwrap_or_else(|_| {
            log::debug!("{id}: checkpoint mask is empty, precision taken as {}", (c.fn_ == 0) as u8);
            if c.fn_ == 0 { 1.0 } else { 0.0 }
        });
        dice += dsc(&c);
    }
    let k = masks.len() as f64;
    Ok(PseudoLabelCandidate {
        id: id.to_string(),
        masks,
        reference,
        stability,
        mean_precision: prec / k,
        mean_dice: dice / k,
    })
}

/// Predicts every unlabeled scan with every checkpoint and scores it;
/// parallel over scans, output in input order.
pub fn generate_candidates(
    checkpoints: &[Checkpoint],
    best: &Checkpoint,
    unlabeled: &[(String, FeatureVolume)],
    threshold: f64,
) -> Result<Vec<PseudoLabelCandidate>> {
    unlabeled
        .par_iter()
        .map(|(id, f)| score_scan(id, f, checkpoints, best, threshold))
        .collect()
}

/// One iteration's reliability filter. Thresholds are strict (`>`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationPolicy {
    pub min_mean_precision: Option<f64>,
    pub min_mean_dice: Option<f64>,
    pub cap: usize,
}

impl Default for IterationPolicy {
    fn default() -> Self {
        IterationPolicy {
            min_mean_precision: None,
            min_mean_dice: None,
            cap: 40,
        }
    }
}

impl IterationPolicy {
    pub fn accepts(&self, c: &CandidateScore) -> bool {
        self.min_mean_precision.is_none_or(|t| c.mean_precision > t) && self.min_mean_dice.is_none_or(|t| c.mean_dice > t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionPolicy {
    pub iterations: Vec<IterationPolicy>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            iterations: vec![
                IterationPolicy {
                    min_mean_precision: Some(0.9),
                    min_mean_dice: None,
                    cap: 40,
                },
                IterationPolicy {
                    min_mean_precision: Some(0.95),
                    min_mean_dice: Some(0.85),
                    cap: 40,
                },
            ],
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.iterations.iter().enumerate() {
            for t in [p.min_mean_precision, p.min_mean_dice].into_iter().flatten() {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!("selection[{i}]: thresholds must lie in [0, 1], got {t}")));
                }
            }
        }
        Ok(())
    }
}

/// Partition of the scored scans into selected (D_u1) and remainder (D_u2).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Vec<String>,
    pub remainder: Vec<String>,
}

/// Filters by the iteration's thresholds, ranks by stability (descending,
/// ties by id ascending) and keeps at most `cap`. The remainder keeps input
/// order.
pub fn select_reliable(candidates: &[CandidateScore], policy: &SelectionPolicy, iteration: usize) -> Result<Selection> {
    let rule = policy
        .iterations
        .get(iteration)
        .ok_or_else(|| Error::Config(format!("no selection policy for iteration {iteration}")))?;
    let mut passing: Vec<&CandidateScore> = candidates.iter().filter(|c| rule.accepts(c)).collect();
    passing.sort_by(|a, b| b.stability.total_cmp(&a.stability).then_with(|| a.id.cmp(&b.id)));
    passing.truncate(rule.cap);
    let selected: Vec<String> = passing.iter().map(|c| c.id.clone()).collect();
    let remainder = candidates
        .iter()
        .filter(|c| !selected.contains(&c.id))
        .map(|c| c.id.clone())
        .collect();
    Ok(Selection { selected, remainder })
}

/// Checks that the selection splits `ids` into two disjoint covering parts.
pub fn check_partition(ids: &[String], sel: &Selection) -> Result<()> {
    let mut all: Vec<&String> = sel.selected.iter().chain(&sel.remainder).collect();
    all.sort();
    let mut want: Vec<&String> = ids.iter().collect();
    want.sort();
    if all != want {
        return Err(Error::Config("selection is not a partition of the candidate ids".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VoxelClassifier;
    use crate::volume::Spacing;

    fn line(bits: &[u8]) -> BinaryMask {
        BinaryMask::new([1, 1, bits.len()], Spacing::default(), bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn stability_hand_case() {
        let reference = line(&[1, 1, 1, 1, 0, 0, 0, 0]);
        // IoU 2/4 and 1/4
        let a = line(&[1, 1, 0, 0, 0, 0, 0, 0]);
        let b = line(&[1, 0, 0, 0, 0, 0, 0, 0]);
        let s = stability_score(&[a, b, reference.clone()]).unwrap();
        assert!((s - 0.75).abs() < 1e-12);
        let same = vec![reference.clone(); 5];
        assert_eq!(stability_score(&same).unwrap(), 4.0);
        let off = line(&[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(stability_score(&[off.clone(), off, reference]).unwrap(), 0.0);
        assert!(matches!(stability_score(&[line(&[1])]), Err(Error::TooFewCheckpoints(1))));
    }

    #[test]
    fn agreement_cases() {
        let r = line(&[1, 1, 0, 0]);
        let masks = vec![r.clone(), line(&[0, 0, 1, 1])];
        assert_eq!(mean_agreement(&masks, &r, AgreementMetric::Precision).unwrap(), 0.5);
        assert_eq!(mean_agreement(&masks, &r, AgreementMetric::Dice).unwrap(), 0.5);
        // precisions 1, 1/2, 2/3
        let hand = vec![line(&[1, 0, 0, 0]), line(&[1, 0, 1, 0]), line(&[1, 1, 1, 0])];
        let got = mean_agreement(&hand, &r, AgreementMetric::Precision).unwrap();
        assert!((got - (1.0 + 0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        let empty = vec![line(&[0, 0, 0, 0])];
        assert!(mean_agreement(&empty, &r, AgreementMetric::Precision).is_err());
    }

    fn score(id: &str, s: f64, p: f64, d: f64) -> CandidateScore {
        CandidateScore {
            id: id.into(),
            stability: s,
            mean_precision: p,
            mean_dice: d,
        }
    }

    #[test]
    fn selection_ranks_filters_and_caps() {
        let c = vec![
            score("a", 3.0, 0.95, 0.9),
            score("b", 3.5, 0.85, 0.9),
            score("c", 3.0, 0.99, 0.80),
            score("d", 3.9, 0.97, 0.9),
            score("e", 2.0, 0.90, 0.9),
        ];
        let mut policy = SelectionPolicy::default();
        let sel = select_reliable(&c, &policy, 0).unwrap();
        assert_eq!(sel.selected, vec!["d", "a", "c"]);
        assert_eq!(sel.remainder, vec!["b", "e"]);
        let sel = select_reliable(&c, &policy, 1).unwrap();
        assert_eq!(sel.selected, vec!["d"]);
        policy.iterations[0].cap = 2;
        let sel = select_reliable(&c, &policy, 0).unwrap();
        assert_eq!(sel.selected, vec!["d", "a"]);
        check_partition(&c.iter().map(|c| c.id.clone()).collect::<Vec<_>>(), &sel).unwrap();
        assert!(select_reliable(&c, &policy, 2).is_err());
    }

    #[test]
    fn identical_checkpoints_are_fully_stable() {
        let dims = [2, 3, 4];
        let data: Vec<f64> = (0..24).map(|i| (i as f64 - 11.5) / 4.0).collect();
        let f = FeatureVolume::from_raw(dims, Spacing::default(), 1, data).unwrap();
        let clf = VoxelClassifier {
            weights: vec![2.0],
            bias: 0.0,
        };
        let ck: Vec<Checkpoint> = (1..=5)
            .map(|e| Checkpoint {
                epoch: e,
                classifier: clf.clone(),
                val_dice: 0.5,
            })
            .collect();
        let cands = generate_candidates(&ck, &ck[4], &[("u0".into(), f)], 0.5).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].masks.len(), 5);
        assert_eq!(cands[0].stability, 4.0);
        assert_eq!((cands[0].mean_precision, cands[0].mean_dice), (1.0, 1.0));
        assert!(generate_candidates(&ck, &ck[0], &[], 0.5).unwrap().is_empty());
    }
}
