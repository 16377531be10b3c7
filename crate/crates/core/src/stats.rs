//! One-way ANOVA with Bonferroni-corrected pooled-variance t post-hoc tests.
//!
//! Tail probabilities come from the regularized incomplete beta function:
//! `P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)` and the two-sided t p-value
//! `I_{ν/(ν + t²)}(ν/2, 1/2)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const STATS_CSV_HEADER: &str = "metric,comparison,f_or_t,p_raw,p_adjusted,significant";

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSamples {
    pub label: String,
    pub values: Vec<f64>,
}

impl GroupSamples {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        GroupSamples { label: label.into(), values }
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn sum_sq_dev(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairwiseResult {
    pub a: String,
    pub b: String,
    pub t: f64,
    pub df: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

fn check_groups(groups: &[GroupSamples]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::Stats(format!("need at least 2 groups, got {}", groups.len())));
    }
    for g in groups {
        if g.values.len() < 2 {
            return Err(Error::Stats(format!("group '{}' has fewer than 2 values", g.label)));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Stats(format!("group '{}' has a non-finite value", g.label)));
        }
    }
    Ok(())
}

/// Survival function of F(d1, d2) at `f`.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)).clamp(0.0, 1.0)
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn one_way_anova(groups: &[GroupSamples]) -> Result<AnovaResult> {
    check_groups(groups)?;
    let n: usize = groups.iter().map(|g| g.values.len()).sum();
    let k = groups.len();
    let grand = groups.iter().flat_map(|g| &g.values).sum::<f64>() / n as f64;
    let ss_between: f64 = groups
        .iter()
        .map(|g| g.values.len() as f64 * (g.mean() - grand).powi(2))
        .sum();
    let ss_within: f64 = groups.iter().map(GroupSamples::sum_sq_dev).sum();
    let (df_between, df_within) = (k - 1, n - k);
    if df_within == 0 {
        return Err(Error::Stats("no within-group degrees of freedom".into()));
    }
    if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Ok(AnovaResult { f: 0.0, df_between, df_within, p: 1.0 });
        }
        return Err(Error::Stats("zero within-group variance with distinct group means".into()));
    }
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    let p = f_survival(f, df_between as f64, df_within as f64);
    Ok(AnovaResult { f, df_between, df_within, p })
}

/// Pooled-variance two-sample t test: `(t, df, two-sided p)`.
pub fn pooled_t_test(a: &GroupSamples, b: &GroupSamples) -> Result<(f64, usize, f64)> {
    check_groups(&[a.clone(), b.clone()])?;
    let (na, nb) = (a.values.len() as f64, b.values.len() as f64);
    let df = a.values.len() + b.values.len() - 2;
    let pooled = (a.sum_sq_dev() + b.sum_sq_dev()) / df as f64;
    let diff = a.mean() - b.mean();
    if pooled == 0.0 {
        if diff == 0.0 {
            return Ok((0.0, df, 1.0));
        }
        return Err(Error::Stats(format!("zero pooled variance between '{}' and '{}'", a.label, b.label)));
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok((t, df, t_two_sided(t, df as f64)))
}

pub fn bonferroni_adjust(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

/// All C(g, 2) pairwise tests in group order, adjusted with m = C(g, 2).
pub fn bonferroni_posthoc(groups: &[GroupSamples], alpha: f64) -> Result<Vec<PairwiseResult>> {
    check_groups(groups)?;
    let m = groups.len() * (groups.len() - 1) / 2;
    let mut out = Vec::with_capacity(m);
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (t, df, p_raw) = pooled_t_test(&groups[i], &groups[j])?;
            let p_adjusted = bonferroni_adjust(p_raw, m);
            out.push(PairwiseResult {
                a: groups[i].label.clone(),
                b: groups[j].label.clone(),
                t,
                df,
                p_raw,
                p_adjusted,
                significant: p_adjusted < alpha,
            });
        }
    }
    Ok(out)
}

/// Numeric columns of a per-group CSV keyed by header name. A leading
/// `scan_id` column (or any non-numeric column) is skipped.
pub fn read_group_csv(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut columns: Vec<Option<Vec<f64>>> = headers.iter().map(|h| (h != "scan_id").then(Vec::new)).collect();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
        for (c, field) in record.iter().enumerate() {
            let Some(col) = columns.get_mut(c).and_then(Option::as_mut) else { continue };
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => col.push(v),
                _ => {
                    return Err(Error::MalformedRow {
                        row: row + 2,
                        message: format!("column '{}' value '{field}' is not a finite number", headers[c]),
                    })
                }
            }
        }
    }
    Ok(headers
        .into_iter()
        .zip(columns)
        .filter_map(|(h, c)| c.map(|v| (h, v)))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsRow {
    pub metric: String,
    pub comparison: String,
    pub f_or_t: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

impl StatsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6e},{:.6e},{}",
            self.metric, self.comparison, self.f_or_t, self.p_raw, self.p_adjusted, self.significant
        )
    }
}

/// ANOVA plus post-hoc rows for every metric shared by all groups, in the
/// column order of the first group. Metrics whose test is undefined are
/// skipped with a warning.
pub fn compare_groups(groups: &[(String, BTreeMap<String, Vec<f64>>)], alpha: f64, column_order: &[String]) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for metric in column_order {
        let samples: Option<Vec<GroupSamples>> = groups
            .iter()
            .map(|(label, table)| table.get(metric).map(|v| GroupSamples::new(label.clone(), v.clone())))
            .collect();
        let Some(samples) = samples else { continue };
        let result = one_way_anova(&samples).and_then(|a| Ok((a, bonferroni_posthoc(&samples, alpha)?)));
        match result {
            Ok((anova, pairs)) => {
                rows.push(StatsRow {
                    metric: metric.clone(),
                    comparison: "anova".into(),
                    f_or_t: anova.f,
                    p_raw: anova.p,
                    p_adjusted: anova.p,
                    significant: anova.p < alpha,
                });
                rows.extend(pairs.into_iter().map(|p| StatsRow {
                    metric: metric.clone(),
                    comparison: format!("{} vs {}", p.a, p.b),
                    f_or_t: p.t,
                    p_raw: p.p_raw,
                    p_adjusted: p.p_adjusted,
                    significant: p.significant,
                }));
            }
            Err(e) => log::warn!("skipping metric {metric}: {e}"),
        }
    }
    rows
}

pub fn stats_csv(rows: &[StatsRow]) -> String {
    let mut out = String::from(STATS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}
