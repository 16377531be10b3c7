//! Candidate scoring and reliable-label selection on their own: checkpoint
//! stability, agreement with the best checkpoint, then the per-iteration
//! threshold + cap policy.
//!
//! cargo run --release --example pseudo_labels

use vesselforge::selftrain::{candidates_csv, select_reliable, stability_score, CandidateScore, SelectionPolicy};
use vesselforge::volume::{BinaryMask, Spacing};

fn cube(lo: usize, hi: usize) -> BinaryMask {
    let sp = Spacing::isotropic(1.0).unwrap();
    BinaryMask::from_fn([8, 8, 8], sp, |z, y, x| [z, y, x].iter().all(|&c| (lo..hi).contains(&c)))
}

fn main() -> vesselforge::Result<()> {
    // a scan whose predictions settle early vs. one that keeps shifting
    let settled = vec![cube(2, 6), cube(2, 6), cube(2, 6), cube(2, 6)];
    let drifting = vec![cube(0, 4), cube(1, 5), cube(2, 6), cube(3, 7)];
    println!("stability settled  {:.3}", stability_score(&settled)?);
    println!("stability drifting {:.3}", stability_score(&drifting)?);

    let scores: Vec<CandidateScore> = (0..8)
        .map(|i| CandidateScore {
            id: format!("scan{i}"),
            stability: 3.0 - 0.25 * i as f64,
            mean_precision: 0.99 - 0.02 * i as f64,
            mean_dice: 0.95 - 0.03 * i as f64,
        })
        .collect();
    print!("{}", candidates_csv(&scores));

    let mut policy = SelectionPolicy::default();
    for it in policy.iterations.iter_mut() {
        it.cap = 3;
    }
    let first = select_reliable(&scores, &policy, 0)?;
    println!("iteration 1 selected {:?}", first.selected);
    let rest: Vec<CandidateScore> = scores.iter().filter(|s| first.remainder.contains(&s.id)).cloned().collect();
    let second = select_reliable(&rest, &policy, 1)?;
    println!("iteration 2 selected {:?}, remainder {:?}", second.selected, second.remainder);
    Ok(())
}
