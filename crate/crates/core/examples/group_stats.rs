//! One-way ANOVA with Bonferroni post-hoc t-tests across three groups of
//! per-scan measurements.
//!
//! cargo run --release --example group_stats

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vesselforge::stats::{bonferroni_posthoc, one_way_anova, GroupSamples};

fn main() -> vesselforge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // BV5/TBV-like fractions for three cohorts
    let groups: Vec<GroupSamples> = [("control", 0.42), ("mild", 0.40), ("severe", 0.33)]
        .into_iter()
        .map(|(label, mean)| {
            let d = Normal::new(mean, 0.04).unwrap();
            GroupSamples::new(label, (0..20).map(|_| d.sample(&mut rng)).collect())
        })
        .collect();

    let anova = one_way_anova(&groups)?;
    println!("F({}, {}) = {:.3}, p = {:.3e}", anova.df_between, anova.df_within, anova.f, anova.p);
    for p in bonferroni_posthoc(&groups, 0.05)? {
        println!(
            "{:>8} vs {:<8} t = {:>7.3}  p = {:.3e}  adjusted {:.3e}  {}",
            p.a,
            p.b,
            p.t,
            p.p_raw,
            p.p_adjusted,
            if p.significant { "*" } else { "" }
        );
    }
    Ok(())
}
