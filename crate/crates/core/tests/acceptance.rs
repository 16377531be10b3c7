//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ... PASS|FAIL` line. Every tolerance is pinned below.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::VecDeque;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vesselforge::augment::{apply_strong, apply_weak, apply_weak_then_strong, warp_pair, AugmentationSpec, StrongSpec, WeakSpec, WeakTransform};
use vesselforge::cli::{PipelineConfig, RunManifest, MANIFEST_FILE};
use vesselforge::features::FeatureVolume;
use vesselforge::metrics::{confusion, dsc, iou, precision, sensitivity};
use vesselforge::model::{hra_ce_gradient, hra_ce_loss, predict_probs, ProbabilityVolume, VoxelClassifier};
use vesselforge::morphometry::{analyze, distance_map, segment_volumes, MorphometryOptions};
use vesselforge::phantom::{generate_tree_phantom, generate_tube_phantom, Axis, IntensitySpec, PhantomSpec};
use vesselforge::selftrain::{
    check_partition, run_pipeline, select_reliable, stability_score, CandidateScore, Corpus, IterationPolicy, Selection,
    SelectionPolicy,
};
use vesselforge::stats::{bonferroni_posthoc, one_way_anova, pooled_t_test, GroupSamples};
use vesselforge::volume::{connected_components, unravel, BinaryMask, Connectivity, Dims, Spacing, VolumeData, VolumeGrid};

// criterion 1
const METRIC_PAIRS: usize = 200;
const METRIC_TOL: f64 = 1e-12;
const METRIC_BUDGET: Duration = Duration::from_secs(10);
// criterion 2
const HRA_CE_INSTANCES: usize = 100;
const HRA_CE_TOL: f64 = 1e-12;
const HRA_GRAD_INSTANCES: usize = 50;
const HRA_GRAD_REL_TOL: f64 = 1e-5;
const HRA_FD_STEP: f64 = 1e-6;
/// Instances with any voxel this close to the gate boundary are redrawn.
const HRA_GATE_MARGIN: f64 = 1e-3;
// criterion 3
const STABILITY_TOL: f64 = 1e-12;
const STABILITY_RANDOM: usize = 100;
// criterion 4
const SELECTION_CASES: usize = 200;
// criterion 5
const TREND_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/phantom_selftrain.json");
const TREND_SEEDS: [u64; 3] = [0, 1, 2];
const TREND_MIN_PRECISION_GAIN: f64 = 0.005;
const TREND_MAX_DSC_DROP: f64 = 0.02;
const TREND_BUDGET: Duration = Duration::from_secs(15 * 60);
// criterion 6
const TUBE_TBV_ML: f64 = 0.6283;
const TUBE_TBV_REL_TOL: f64 = 0.10;
const TUBE_RADIUS_REL_TOL: f64 = 0.20;
const MORPH_PHANTOM_BUDGET: Duration = Duration::from_secs(60);
// criterion 7
const INVARIANT_PHANTOMS: usize = 50;
const INVARIANT_REL_TOL: f64 = 1e-9;
// criterion 8
const TOPO_MASKS: usize = 50;
const TOPO_BUDGET: Duration = Duration::from_secs(30);
// criterion 9
const STATS_TOL: f64 = 1e-9;
// criterion 11
const AUG_DRAWS: u64 = 100;
/// Landmark centroid in image vs mask, in voxels.
const LANDMARK_TOL_VOX: f64 = 1.0;

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {n:>2} {name:<34} {}  {detail}", if ok { "PASS" } else { "FAIL" });
}

fn random_mask(rng: &mut impl Rng, dims: Dims, spacing: Spacing, density: f64) -> BinaryMask {
    BinaryMask::from_fn(dims, spacing, |_, _, _| rng.random::<f64>() < density)
}

fn unit() -> Spacing {
    Spacing::isotropic(1.0).unwrap()
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_metric_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut failures = Vec::new();
    for case in 0..METRIC_PAIRS {
        // include empty masks now and then
        let dp = if case % 25 == 0 { 0.0 } else { rng.random::<f64>() };
        let dg = if case % 40 == 1 { 0.0 } else { rng.random::<f64>() };
        let pred = random_mask(&mut rng, [8, 8, 8], unit(), dp);
        let gt = random_mask(&mut rng, [8, 8, 8], unit(), dg);
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..512 {
            match (pred.bits()[i], gt.bits()[i]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let c = confusion(&pred, &gt).unwrap();
        if (c.tp, c.fp, c.fn_, c.tn) != (tp, fp, fn_, tn) {
            failures.push(format!("case {case}: counts"));
            continue;
        }
        let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
        let want_dsc = if tp + fp + fn_ == 0.0 { 1.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
        let want_iou = if tp + fp + fn_ == 0.0 { 1.0 } else { tp / (tp + fp + fn_) };
        let close = |a: f64, b: f64| (a - b).abs() <= METRIC_TOL;
        if !close(dsc(&c), want_dsc) || !close(iou(&c), want_iou) {
            failures.push(format!("case {case}: dsc/iou"));
        }
        match sensitivity(&c) {
            Ok(s) if tp + fn_ > 0.0 && close(s, tp / (tp + fn_)) => {}
            Err(_) if tp + fn_ == 0.0 => {}
            _ => failures.push(format!("case {case}: sensitivity")),
        }
        match precision(&c) {
            Ok(p) if tp + fp > 0.0 && close(p, tp / (tp + fp)) => {}
            Err(_) if tp + fp == 0.0 => {}
            _ => failures.push(format!("case {case}: precision")),
        }
        let i = iou(&c);
        if !close(dsc(&c), 2.0 * i / (1.0 + i)) {
            failures.push(format!("case {case}: dsc-iou identity"));
        }
    }
    let elapsed = t0.elapsed();
    let ok = failures.is_empty() && elapsed < METRIC_BUDGET;
    report(1, "metric oracle equivalence", ok, &format!("{METRIC_PAIRS} pairs, {} mismatches, {elapsed:.2?}", failures.len()));
    assert!(ok, "{failures:?} in {elapsed:?}");
}

// ---------------------------------------------------------------- 2

fn full_cross_entropy(probs: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y { -p.ln() } else { -(1.0 - p).ln() })
        .sum();
    total / probs.len() as f64
}

fn gated_loss(classifier: &VoxelClassifier, features: &FeatureVolume, labels: &BinaryMask, t: f64) -> f64 {
    hra_ce_loss(&predict_probs(classifier, features).unwrap(), labels, t).unwrap().loss
}

#[test]
fn criterion_02_hra_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let dims = [4, 5, 6];
    let n = 120;

    let mut ce_worst = 0.0f64;
    for _ in 0..HRA_CE_INSTANCES {
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.999)).collect();
        let labels = random_mask(&mut rng, dims, unit(), 0.3);
        let pv = ProbabilityVolume { dims, spacing: unit(), probs: probs.clone() };
        let got = hra_ce_loss(&pv, &labels, 0.0).unwrap();
        assert_eq!(got.selected_count, n);
        ce_worst = ce_worst.max((got.loss - full_cross_entropy(&probs, labels.bits())).abs());
    }

    let mut grad_worst = 0.0f64;
    let mut done = 0;
    while done < HRA_GRAD_INSTANCES {
        let nf = rng.random_range(1..5);
        let data: Vec<f64> = (0..n * nf).map(|_| rng.random_range(-2.0..2.0)).collect();
        let features = FeatureVolume::from_raw(dims, unit(), nf, data).unwrap();
        let labels = random_mask(&mut rng, dims, unit(), 0.4);
        let classifier = VoxelClassifier {
            weights: (0..nf).map(|_| rng.random_range(-1.5..1.5)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        let t = rng.random_range(0.0..0.5);
        let probs = predict_probs(&classifier, &features).unwrap().probs;
        let margin = probs
            .iter()
            .zip(labels.bits())
            .map(|(&p, &y)| ((y as u8 as f64 - p).abs() - t).abs())
            .fold(f64::INFINITY, f64::min);
        if margin < HRA_GATE_MARGIN {
            continue;
        }
        let analytic = hra_ce_gradient(&classifier, &features, &labels, t, None).unwrap();
        if analytic.selected_count == 0 {
            continue;
        }
        let mut a = analytic.weights.clone();
        a.push(analytic.bias);
        let mut numeric = Vec::with_capacity(nf + 1);
        for k in 0..=nf {
            let shifted = |h: f64| {
                let mut c = classifier.clone();
                if k < nf {
                    c.weights[k] += h;
                } else {
                    c.bias += h;
                }
                gated_loss(&c, &features, &labels, t)
            };
            numeric.push((shifted(HRA_FD_STEP) - shifted(-HRA_FD_STEP)) / (2.0 * HRA_FD_STEP));
        }
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt());
        grad_worst = grad_worst.max(diff / scale.max(1e-12));
        done += 1;
    }

    let mut nested = true;
    for _ in 0..20 {
        let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels = random_mask(&mut rng, dims, unit(), 0.5);
        let pv = ProbabilityVolume { dims, spacing: unit(), probs };
        let mut prev: Option<BinaryMask> = None;
        for step in 0..=50 {
            let sel = hra_ce_loss(&pv, &labels, step as f64 * 0.01).unwrap().selected;
            if let Some(p) = &prev {
                nested &= sel.bits().iter().zip(p.bits()).all(|(&now, &before)| !now || before);
            }
            prev = Some(sel);
        }
    }

    let ok = ce_worst <= HRA_CE_TOL && grad_worst < HRA_GRAD_REL_TOL && nested;
    report(
        2,
        "hard-region adaptive loss",
        ok,
        &format!("T=0 |Δ| {ce_worst:.1e}, grad rel {grad_worst:.1e}, nested {nested}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 3

fn iou_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let inter = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x && **y).count();
    let union = a.bits().iter().zip(b.bits()).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn line(bits: &[u8]) -> BinaryMask {
    BinaryMask::new([1, 1, bits.len()], unit(), bits.iter().map(|&b| b == 1).collect()).unwrap()
}

#[test]
fn criterion_03_stability_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ok = true;
    for k in 2..=6 {
        let m = random_mask(&mut rng, [5, 5, 5], unit(), 0.3);
        ok &= stability_score(&vec![m; k]).unwrap() == (k - 1) as f64;
    }
    let disjoint = [line(&[1, 1, 0, 0, 0, 0]), line(&[0, 0, 1, 1, 0, 0]), line(&[0, 0, 0, 0, 1, 1])];
    ok &= stability_score(&disjoint).unwrap() == 0.0;
    // IoU 2/4 + 1/4 against the last mask
    let hand = [line(&[1, 1, 0, 0]), line(&[1, 0, 0, 0]), line(&[1, 1, 1, 1])];
    let hand_value = stability_score(&hand).unwrap();
    ok &= (hand_value - 0.75).abs() <= STABILITY_TOL;

    let mut worst = 0.0f64;
    for _ in 0..STABILITY_RANDOM {
        let k = rng.random_range(2..8);
        let density = rng.random_range(0.05..0.6);
        let masks: Vec<BinaryMask> = (0..k).map(|_| random_mask(&mut rng, [6, 6, 6], unit(), density)).collect();
        let oracle: f64 = masks[..k - 1].iter().map(|m| iou_oracle(m, &masks[k - 1])).sum();
        worst = worst.max((stability_score(&masks).unwrap() - oracle).abs());
    }
    ok &= worst <= STABILITY_TOL && stability_score(&hand[..1]).is_err();
    report(3, "stability score", ok, &format!("hand case {hand_value}, random worst |Δ| {worst:.1e}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 4

fn selection_oracle(cands: &[CandidateScore], rule: &IterationPolicy) -> Selection {
    let mut keep: Vec<CandidateScore> = cands
        .iter()
        .filter(|c| rule.min_mean_precision.is_none_or(|t| c.mean_precision > t))
        .filter(|c| rule.min_mean_dice.is_none_or(|t| c.mean_dice > t))
        .cloned()
        .collect();
    // insertion sort: stability descending, id ascending
    for i in 1..keep.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (&keep[j - 1], &keep[j]);
            let swap = b.stability > a.stability || (b.stability == a.stability && b.id < a.id);
            if !swap {
                break;
            }
            keep.swap(j - 1, j);
            j -= 1;
        }
    }
    let selected: Vec<String> = keep.into_iter().take(rule.cap).map(|c| c.id).collect();
    let remainder = cands.iter().map(|c| c.id.clone()).filter(|id| !selected.contains(id)).collect();
    Selection { selected, remainder }
}

#[test]
fn criterion_04_selection_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = 0;
    let mut ok = true;
    for case in 0..SELECTION_CASES {
        let n = rng.random_range(0..30);
        let mut ids: Vec<usize> = (0..n).collect();
        // shuffled ids so input order differs from id order
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let cands: Vec<CandidateScore> = ids
            .iter()
            .map(|i| CandidateScore {
                id: format!("scan{i:02}"),
                // coarse grid of values so ties happen
                stability: rng.random_range(0..8) as f64 * 0.5,
                mean_precision: rng.random_range(80..100) as f64 / 100.0,
                mean_dice: rng.random_range(70..100) as f64 / 100.0,
            })
            .collect();
        let rule = IterationPolicy {
            min_mean_precision: (case % 3 != 0).then(|| rng.random_range(80..100) as f64 / 100.0),
            min_mean_dice: (case % 2 == 0).then(|| rng.random_range(70..100) as f64 / 100.0),
            cap: rng.random_range(0..12),
        };
        let policy = SelectionPolicy { iterations: vec![rule.clone()] };
        let got = select_reliable(&cands, &policy, 0).unwrap();
        if got != selection_oracle(&cands, &rule) {
            mismatches += 1;
        }
        ok &= got.selected.len() <= rule.cap;
        ok &= got
            .selected
            .iter()
            .all(|id| cands.iter().find(|c| &c.id == id).is_some_and(|c| rule.accepts(c)));
        ok &= check_partition(&cands.iter().map(|c| c.id.clone()).collect::<Vec<_>>(), &got).is_ok();
    }
    ok &= mismatches == 0;
    report(4, "selection policy", ok, &format!("{SELECTION_CASES} constructed sets, {mismatches} oracle mismatches"));
    assert!(ok);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_self_training_trend() {
    let t0 = Instant::now();
    let cfg = PipelineConfig::load(Path::new(TREND_CONFIG)).unwrap();
    let inline = cfg.phantom_corpus.clone().expect("inline phantom corpus");
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in TREND_SEEDS {
        let mut st = cfg.selftrain();
        st.seed = seed;
        let corpus = Corpus::from_phantoms(&inline.phantom, inline.sizes.as_array(), seed).unwrap();
        let out = run_pipeline(&corpus, &st).unwrap();
        let (b, f) = (&out.report.baseline.test, out.report.final_metrics());
        let gain = f.precision - b.precision;
        let drop = b.dsc - f.dsc;
        let pass = gain >= TREND_MIN_PRECISION_GAIN && drop <= TREND_MAX_DSC_DROP;
        ok &= pass;
        lines.push(format!(
            "seed {seed}: precision {:.4}->{:.4} ({gain:+.4}), dsc {:.4}->{:.4} ({:+.4}) {}",
            b.precision,
            f.precision,
            b.dsc,
            f.dsc,
            -drop,
            if pass { "ok" } else { "miss" }
        ));
    }
    let elapsed = t0.elapsed();
    ok &= elapsed < TREND_BUDGET;
    for l in &lines {
        println!("    {l}");
    }
    report(5, "self-training trend", ok, &format!("{} seeds, {elapsed:.1?}", TREND_SEEDS.len()));
    assert!(ok, "{lines:#?}");
}

// ---------------------------------------------------------------- 6

fn valid_tree(template: &PhantomSpec, seeds: impl Iterator<Item = u64>) -> (BinaryMask, vesselforge::phantom::TruthGraph, u64) {
    for seed in seeds {
        let spec = PhantomSpec { seed, ..template.clone() };
        let (_, mask, truth) = generate_tree_phantom(&spec).unwrap();
        if truth.is_valid() {
            return (mask, truth, seed);
        }
    }
    panic!("no clearance-valid tree among the seeds tried");
}

#[test]
fn criterion_06_morphometry_phantoms() {
    let t0 = Instant::now();
    let opts = MorphometryOptions::default();
    let sp = Spacing::isotropic(0.5).unwrap();
    let (_, tube, _) = generate_tube_phantom([40, 40, 120], sp, 2.0, Axis::X, 50.0, &IntensitySpec::default(), 0).unwrap();
    let a = analyze(&tube, &opts).unwrap();
    let r = &a.report;
    let radius = a.graph.segments.first().map_or(f64::NAN, |s| s.mean_radius_mm);
    let radius_tol = (TUBE_RADIUS_REL_TOL * 2.0).max(0.5);
    let tube_ok = (r.tbv_ml - TUBE_TBV_ML).abs() <= TUBE_TBV_REL_TOL * TUBE_TBV_ML
        && (r.n_segments, r.n_endpoints, r.n_branchpoints) == (1, 2, 0)
        && (radius - 2.0).abs() <= radius_tol
        && r.bv5_ml == 0.0;

    let mut y = PhantomSpec {
        dims: [48, 48, 48],
        ..PhantomSpec::default()
    };
    y.tree.depth = 1;
    y.tree.root_radius_mm = 2.5;
    y.intensity.noise_sigma = 0.0;
    let (ymask, _, yseed) = valid_tree(&y, 0..50);
    let yr = analyze(&ymask, &opts).unwrap().report;
    let y_ok = (yr.n_segments, yr.n_branchpoints, yr.n_endpoints) == (3, 1, 3);

    let mut deep = PhantomSpec {
        dims: [64, 64, 64],
        ..PhantomSpec::default()
    };
    deep.tree.depth = 3;
    deep.tree.root_radius_mm = 2.5;
    let (dmask, truth, dseed) = valid_tree(&deep, 0..50);
    let dr = analyze(&dmask, &opts).unwrap().report;
    let deep_ok = (dr.n_segments, dr.n_endpoints, dr.n_branchpoints) == (truth.n_segments, truth.n_endpoints, truth.n_branchpoints);

    let elapsed = t0.elapsed();
    let ok = tube_ok && y_ok && deep_ok && elapsed < MORPH_PHANTOM_BUDGET;
    report(
        6,
        "morphometry phantoms",
        ok,
        &format!(
            "tube tbv {:.4} r {radius:.3} counts ({},{},{}); Y(seed {yseed}) ({},{},{}); tree(seed {dseed}) ({},{},{}) vs truth ({},{},{}); {elapsed:.1?}",
            r.tbv_ml,
            r.n_segments,
            r.n_endpoints,
            r.n_branchpoints,
            yr.n_segments,
            yr.n_branchpoints,
            yr.n_endpoints,
            dr.n_segments,
            dr.n_endpoints,
            dr.n_branchpoints,
            truth.n_segments,
            truth.n_endpoints,
            truth.n_branchpoints
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 7

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= INVARIANT_REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_07_morphometry_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let opts = MorphometryOptions::default();
    let mut fixtures: Vec<BinaryMask> = Vec::new();
    for i in 0..INVARIANT_PHANTOMS {
        let mut spec = PhantomSpec {
            dims: [40, 40, 40],
            seed: rng.random(),
            ..PhantomSpec::default()
        };
        spec.tree.depth = 1 + i % 3;
        spec.tree.root_radius_mm = rng.random_range(1.5..3.0);
        spec.tree.segment_length_mm = [8.0, 14.0];
        spec.intensity.noise_sigma = 0.0;
        fixtures.push(generate_tree_phantom(&spec).unwrap().1);
    }
    // two separate tubes: a multi-component fixture
    let sp = unit();
    let two = BinaryMask::from_fn([20, 20, 30], sp, |z, y, x| {
        let near = |cz: f64, cy: f64| (z as f64 - cz).powi(2) + (y as f64 - cy).powi(2) <= 4.0;
        (3..27).contains(&x) && (near(5.0, 5.0) || near(14.0, 14.0))
    });
    fixtures.push(two);

    let (mut partition_ok, mut bv5_ok, mut bins_ok, mut components_ok) = (true, true, true, true);
    for mask in &fixtures {
        let a = analyze(mask, &opts).unwrap();
        let r = &a.report;
        let parts: f64 = segment_volumes(mask, &a.skeleton, &a.graph).iter().sum();
        partition_ok &= rel_close(parts, r.tbv_ml);
        bv5_ok &= r.bv5_ml >= 0.0 && r.bv5_ml <= r.tbv_ml;
        bins_ok &= r.radius_bins.iter().sum::<usize>() == r.n_segments;
        let skel = connected_components(&a.skeleton.to_mask(), Connectivity::TwentySix).count();
        components_ok &= skel == connected_components(mask, Connectivity::TwentySix).count();
    }

    let mut scaling_ok = true;
    for mask in fixtures.iter().take(10) {
        let base = analyze(mask, &opts).unwrap();
        let doubled_mask = mask.clone().with_spacing(mask.spacing().scaled(2.0).unwrap());
        let doubled = analyze(&doubled_mask, &opts).unwrap();
        scaling_ok &= rel_close(doubled.report.tbv_ml, 8.0 * base.report.tbv_ml);
        scaling_ok &= rel_close(doubled.report.tree_length_mm, 2.0 * base.report.tree_length_mm);
        scaling_ok &= base.graph.segments.len() == doubled.graph.segments.len();
        scaling_ok &= base
            .graph
            .segments
            .iter()
            .zip(&doubled.graph.segments)
            .all(|(s, d)| rel_close(d.length_mm, 2.0 * s.length_mm));
    }

    let ok = partition_ok && bv5_ok && bins_ok && components_ok && scaling_ok;
    report(
        7,
        "morphometry invariants",
        ok,
        &format!(
            "{} fixtures: partition {partition_ok}, bv5 bounds {bv5_ok}, bins {bins_ok}, components {components_ok}, spacing x2 {scaling_ok}",
            fixtures.len()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 8

fn edt_oracle(mask: &BinaryMask) -> Vec<f64> {
    let dims = mask.dims();
    let sp = mask.spacing().as_array();
    let bg: Vec<[usize; 3]> = (0..mask.len()).filter(|&i| !mask.bits()[i]).map(|i| unravel(dims, i)).collect();
    (0..mask.len())
        .map(|i| {
            if !mask.bits()[i] {
                return 0.0;
            }
            let p = unravel(dims, i);
            // nearest virtual background just outside the grid
            let mut best = (0..3)
                .map(|a| {
                    let steps = (p[a] + 1).min(dims[a] - p[a]) as f64;
                    (steps * sp[a]).powi(2)
                })
                .fold(f64::INFINITY, f64::min);
            for q in &bg {
                let d2: f64 = (0..3).map(|a| ((p[a] as f64 - q[a] as f64) * sp[a]).powi(2)).sum();
                best = best.min(d2);
            }
            best.sqrt()
        })
        .collect()
}

/// Flood fill, labels in order of first raster appearance.
fn components_oracle(mask: &BinaryMask, connectivity: Connectivity) -> Vec<u32> {
    let dims = mask.dims();
    let mut labels = vec![0u32; mask.len()];
    let mut next = 0;
    for start in 0..mask.len() {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let p = unravel(dims, i);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let manhattan = dz.abs() + dy.abs() + dx.abs();
                        if manhattan == 0 || (connectivity == Connectivity::Six && manhattan > 1) {
                            continue;
                        }
                        let q = [p[0] as i64 + dz, p[1] as i64 + dy, p[2] as i64 + dx];
                        if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as i64) {
                            continue;
                        }
                        let j = ((q[0] as usize * dims[1]) + q[1] as usize) * dims[2] + q[2] as usize;
                        if mask.bits()[j] && labels[j] == 0 {
                            labels[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
    }
    labels
}

fn canonical(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == 0 {
                0
            } else {
                let n = map.len() as u32 + 1;
                *map.entry(l).or_insert(n)
            }
        })
        .collect()
}

#[test]
fn criterion_08_edt_and_components() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    // dyadic spacings keep every squared distance exactly representable
    let spacings = [0.5, 0.75, 1.0, 1.25, 2.0];
    let (mut edt_bad, mut cc_bad) = (0, 0);
    for case in 0..TOPO_MASKS {
        let dims = [rng.random_range(1..=10), rng.random_range(1..=10), rng.random_range(1..=10)];
        let sp = if case % 5 == 0 {
            unit()
        } else {
            Spacing::new(
                spacings[rng.random_range(0..5)],
                spacings[rng.random_range(0..5)],
                spacings[rng.random_range(0..5)],
            )
            .unwrap()
        };
        let density = [0.1, 0.4, 0.7, 0.95, 1.0][case % 5];
        let mask = random_mask(&mut rng, dims, sp, density);
        if distance_map(&mask) != edt_oracle(&mask) {
            edt_bad += 1;
        }
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            let got = connected_components(&mask, conn);
            let want = components_oracle(&mask, conn);
            if canonical(&got.labels) != canonical(&want) || got.count() != *want.iter().max().unwrap_or(&0) as usize {
                cc_bad += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    let ok = edt_bad == 0 && cc_bad == 0 && elapsed < TOPO_BUDGET;
    report(
        8,
        "EDT and connected components",
        ok,
        &format!("{TOPO_MASKS} masks: {edt_bad} EDT and {cc_bad} labeling mismatches, {elapsed:.2?}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let sample = |rng: &mut ChaCha8Rng, n: usize, shift: f64| (0..n).map(|_| shift + rng.random::<f64>()).collect::<Vec<_>>();

    let mut ft_worst = 0.0f64;
    for _ in 0..50 {
        let (na, nb) = (rng.random_range(3..15), rng.random_range(3..15));
        let a = GroupSamples::new("a", sample(&mut rng, na, 0.0));
        let b = GroupSamples::new("b", sample(&mut rng, nb, 0.3));
        let f = one_way_anova(&[a.clone(), b.clone()]).unwrap();
        let (t, _, p) = pooled_t_test(&a, &b).unwrap();
        ft_worst = ft_worst.max((f.f - t * t).abs() / (t * t).max(1.0)).max((f.p - p).abs());
    }

    let g = GroupSamples::new("x", vec![1.0, 2.5, 4.0, 3.0]);
    let same = one_way_anova(&[g.clone(), GroupSamples::new("y", g.values.clone())]).unwrap();
    let identical_ok = same.f == 0.0 && same.p == 1.0;

    let four: Vec<GroupSamples> = (0..4)
        .map(|i| GroupSamples::new(format!("g{i}"), sample(&mut rng, 8, i as f64 * 0.2)))
        .collect();
    let pairs = bonferroni_posthoc(&four, 0.05).unwrap();
    let posthoc_ok = pairs.len() == 6 && pairs.iter().all(|p| p.p_adjusted == (6.0 * p.p_raw).min(1.0));

    // hand sums of squares: grand mean 5, SSB 54, SSW 6, F = (54/2)/(6/6)
    let hand = [
        GroupSamples::new("a", vec![1.0, 2.0, 3.0]),
        GroupSamples::new("b", vec![4.0, 5.0, 6.0]),
        GroupSamples::new("c", vec![7.0, 8.0, 9.0]),
    ];
    let hand_f = one_way_anova(&hand).unwrap();
    let mut ss_worst = (hand_f.f - 27.0).abs();
    for _ in 0..30 {
        let k = rng.random_range(2..6);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let n = rng.random_range(2..10);
                sample(&mut rng, n, i as f64 * 0.1)
            }).collect();
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let grand = all.iter().sum::<f64>() / n;
        let mut ssb = 0.0;
        let mut ssw = 0.0;
        for g in &groups {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            ssb += g.len() as f64 * (m - grand).powi(2);
            ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        }
        let want = (ssb / (k as f64 - 1.0)) / (ssw / (n - k as f64));
        let samples: Vec<GroupSamples> = groups.iter().enumerate().map(|(i, g)| GroupSamples::new(format!("{i}"), g.clone())).collect();
        let got = one_way_anova(&samples).unwrap();
        ss_worst = ss_worst.max((got.f - want).abs() / want.max(1.0));
    }

    let ok = ft_worst <= STATS_TOL && identical_ok && posthoc_ok && ss_worst <= STATS_TOL && hand_f.df_between == 2 && hand_f.df_within == 6;
    report(
        9,
        "ANOVA and Bonferroni",
        ok,
        &format!("F-t² {ft_worst:.1e}, identical {identical_ok}, 4-group posthoc {} rows, SS |Δ| {ss_worst:.1e}", pairs.len()),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 10

fn cli(args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_vesselforge"))
        .args(args)
        .env("VESSELFORGE_LOG", "error")
        .status()
        .expect("binary runs");
    status.code().unwrap_or(-1)
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join(MANIFEST_FILE)).unwrap()
}

#[test]
fn criterion_10_cli_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).display().to_string();
    std::fs::write(
        p("corpus.json"),
        r#"{ "phantom": { "dims": [32, 32, 32], "tree": { "root_radius_mm": 2.5, "depth": 1, "segment_length_mm": [8.0, 12.0] },
                          "intensity": { "noise_sigma": 100.0, "blur_sigma_vox": 0.7 } },
             "splits": { "labeled": 2, "unlabeled": 4, "validation": 1, "test": 1 } }"#,
    )
    .unwrap();
    std::fs::write(
        p("pipeline.json"),
        r#"{ "splits": { "labeled": "data/labeled.json", "unlabeled": "data/unlabeled.json",
                         "validation": "data/validation.json", "test": "data/test.json" },
             "train": { "epochs": 60, "checkpoint_every": 10 },
             "selection": [ { "min_mean_precision": 0.0, "cap": 2 }, { "cap": 1 } ],
             "pseudo_threshold": 0.9 }"#,
    )
    .unwrap();
    std::fs::write(p("points.csv"), "1, 2, 3, 1\n4, 5, 6, 0\n0, 0, 0, 1\n").unwrap();
    assert_eq!(cli(&["phantom", "--config", &p("corpus.json"), "--out", &p("data"), "--seed", "4"]), 0);

    // every subcommand, with inputs that do not depend on the rerun
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("phantom", vec!["phantom".into(), "--config".into(), p("corpus.json"), "--seed".into(), "4".into()]),
        ("train", vec!["train".into(), "--config".into(), p("pipeline.json")]),
        ("pseudolabel", vec!["pseudolabel".into(), "--config".into(), p("pipeline.json"), "--model".into(), p("train_a/model.json")]),
        ("select", vec!["select".into(), "--config".into(), p("pipeline.json"), "--candidates".into(), p("pseudolabel_a/candidates.json")]),
        (
            "train_pseudo",
            vec![
                "train".into(),
                "--config".into(),
                p("pipeline.json"),
                "--stage".into(),
                "iteration_1".into(),
                "--pseudo".into(),
                p("select_a/selected.json"),
            ],
        ),
        ("pipeline", vec!["pipeline".into(), "--config".into(), p("pipeline.json")]),
        ("evaluate", vec!["evaluate".into(), "--config".into(), p("pipeline.json"), "--model".into(), p("train_a/model.json")]),
        (
            "evaluate_masks",
            vec!["evaluate".into(), "--pred".into(), p("data/test000.vvol.json"), "--gt".into(), p("data/test000.vvol.json")],
        ),
        ("morph", vec!["morph".into(), "--mask".into(), p("data/test000.vvol.json"), "--mask".into(), p("data/labeled000.vvol.json")]),
        (
            "stats",
            vec!["stats".into(), "--group".into(), format!("a={}", p("morph_a/morphometry.csv")), "--group".into(), format!("b={}", p("morph_a/morphometry.csv"))],
        ),
        (
            "ingest-vessel12",
            vec!["ingest-vessel12".into(), "--points".into(), p("points.csv"), "--reference".into(), p("data/test000_image.vvol.json")],
        ),
    ];

    let mut differing = Vec::new();
    let mut exits = Vec::new();
    for (name, args) in &runs {
        let mut hashes = Vec::new();
        for rerun in ["a", "b"] {
            let out = p(&format!("{name}_{rerun}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--out", &out, "--jobs", "2"]);
            exits.push((name.to_string(), cli(&full)));
            let m = manifest(Path::new(&out));
            let bytes = std::fs::read(Path::new(&out).join(MANIFEST_FILE)).unwrap();
            hashes.push((m, bytes));
        }
        let (a, b) = (&hashes[0], &hashes[1]);
        let payloads = a.0.outputs.iter().filter(|o| o.path.ends_with(".raw") || o.path.ends_with(".csv")).count();
        if a.0.outputs != b.0.outputs || a.0.config_sha256 != b.0.config_sha256 || a.1 != b.1 || (payloads == 0 && *name != "select") {
            differing.push(name.to_string());
        }
    }
    // the mask-pair evaluation of identical masks is a perfect row
    let metrics = std::fs::read_to_string(p("evaluate_masks_a/metrics.csv")).unwrap();
    let perfect = metrics.lines().nth(1).is_some_and(|l| l.ends_with(",1.0000,1.0000,1.0000,1.0000"));

    let failed_exits: Vec<_> = exits.iter().filter(|(_, c)| *c != 0).collect();
    let ok = differing.is_empty() && failed_exits.is_empty() && perfect;
    report(
        10,
        "CLI determinism",
        ok,
        &format!("{} subcommand runs x2, differing {differing:?}, nonzero exits {failed_exits:?}", runs.len()),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 11

fn fixture(dims: Dims, sp: Spacing) -> (VolumeGrid, BinaryMask) {
    let g = VolumeGrid::from_fn(dims, sp, |z, y, x| ((z * 131 + y * 37 + x * 11) % 97) as f32 - 40.0);
    let m = BinaryMask::from_fn(dims, sp, |z, y, x| (z * 7 + y * 3 + x) % 4 == 0);
    (g, m)
}

fn mirrored(grid: &VolumeGrid, mask: &BinaryMask, axes: [bool; 3]) -> (VolumeGrid, BinaryMask) {
    let t = WeakTransform::new([0.0; 3], 1.0, axes, grid.dims(), grid.spacing().as_array());
    warp_pair(grid, mask, |p| t.source(p))
}

fn centroid(weights: impl Iterator<Item = f64>, dims: Dims) -> [f64; 3] {
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (i, w) in weights.enumerate() {
        let p = unravel(dims, i);
        for a in 0..3 {
            acc[a] += w * p[a] as f64;
        }
        total += w;
    }
    acc.map(|v| v / total)
}

#[test]
fn criterion_11_augmentation_contracts() {
    let sp = Spacing::new(1.25, 0.75, 0.75).unwrap();
    let (g, m) = fixture([9, 10, 11], sp);

    let mut mirror_ok = true;
    for axes in [[true, false, false], [false, true, false], [false, false, true], [true, true, true]] {
        let (g1, m1) = mirrored(&g, &m, axes);
        let (g2, m2) = mirrored(&g1, &m1, axes);
        mirror_ok &= g2 == g && m2 == m;
        // and a single mirror is an exact index reversal
        let dims = g.dims();
        mirror_ok &= (0..g.len()).all(|i| {
            let p = unravel(dims, i);
            let q: Vec<usize> = (0..3).map(|a| if axes[a] { dims[a] - 1 - p[a] } else { p[a] }).collect();
            g1.get(q[0], q[1], q[2]) == g.voxels()[i] && m1.get(q[0], q[1], q[2]) == m.bits()[i]
        });
    }

    let identity = AugmentationSpec {
        weak: WeakSpec::identity(),
        strong: StrongSpec::identity(),
        seed: 3,
    };
    let mut identity_ok = true;
    for draw in 0..10 {
        identity_ok &= apply_weak(&g, &m, &identity, draw).unwrap() == (g.clone(), m.clone());
        identity_ok &= apply_strong(&g, &m, &identity, draw).unwrap() == (g.clone(), m.clone());
        identity_ok &= apply_weak_then_strong(&g, &m, &identity, draw).unwrap() == (g.clone(), m.clone());
    }

    // a bright cube labeled in the mask; both must land in the same place
    let dims = [28, 28, 28];
    let spec = AugmentationSpec { seed: 17, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst = 0.0f64;
    let mut binary_ok = true;
    for draw in 0..AUG_DRAWS {
        let c = [rng.random_range(10..15), rng.random_range(10..15), rng.random_range(10..15)];
        let inside = |z: usize, y: usize, x: usize| [z, y, x].iter().zip(&c).all(|(&v, &cc)| v + 2 >= cc && v <= cc + 2);
        let img = VolumeGrid::from_fn(dims, unit(), |z, y, x| if inside(z, y, x) { 100.0 } else { -800.0 });
        let lm = BinaryMask::from_fn(dims, unit(), inside);
        let ops: [fn(&VolumeGrid, &BinaryMask, &AugmentationSpec, u64) -> vesselforge::Result<(VolumeGrid, BinaryMask)>; 3] =
            [apply_weak, apply_strong, apply_weak_then_strong];
        for op in ops {
            let (gi, mi) = op(&img, &lm, &spec, draw).unwrap();
            binary_ok &= mi.payload().iter().all(|&b| b <= 1) && mi.count() > 0;
            let (lo, _) = gi.min_max();
            let ci = centroid(gi.voxels().iter().map(|&v| (v - lo) as f64), dims);
            let cm = centroid(mi.bits().iter().map(|&b| b as u8 as f64), dims);
            let d = (0..3).map(|a| (ci[a] - cm[a]).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(d);
        }
    }
    let landmark_ok = worst <= LANDMARK_TOL_VOX;

    let ok = mirror_ok && identity_ok && landmark_ok && binary_ok;
    report(
        11,
        "augmentation contracts",
        ok,
        &format!("double mirror {mirror_ok}, identity {identity_ok}, landmark worst {worst:.3} vox over {AUG_DRAWS} draws, binary {binary_ok}"),
    );
    assert!(ok);
}
