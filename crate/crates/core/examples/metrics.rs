//! Voxelwise overlap metrics and the per-scan metric table.
//!
//! cargo run --release --example metrics

use vesselforge::metrics::{confusion, metrics_csv, MetricSummary};
use vesselforge::volume::{BinaryMask, Spacing};

fn main() -> vesselforge::Result<()> {
    let sp = Spacing::isotropic(1.0)?;
    let ball = |r: f64, cz: f64| {
        BinaryMask::from_fn([24, 24, 24], sp, move |z, y, x| {
            let d = |a: usize, c: f64| a as f64 - c;
            d(z, cz).powi(2) + d(y, 12.0).powi(2) + d(x, 12.0).powi(2) <= r * r
        })
    };
    let gt = ball(6.0, 12.0);
    let rows = vec![
        ("exact".to_string(), MetricSummary::evaluate(&gt, &gt)?),
        ("dilated".to_string(), MetricSummary::evaluate(&ball(7.0, 12.0), &gt)?),
        ("eroded".to_string(), MetricSummary::evaluate(&ball(5.0, 12.0), &gt)?),
        ("shifted".to_string(), MetricSummary::evaluate(&ball(6.0, 14.0), &gt)?),
    ];
    let c = confusion(&ball(7.0, 12.0), &gt)?;
    println!("dilated: tp {} fp {} fn {} tn {}", c.tp, c.fp, c.fn_, c.tn);
    print!("{}", metrics_csv(&rows));
    Ok(())
}
