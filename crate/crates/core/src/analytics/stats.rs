//! Levene's test and Welch's t-test for comparing two datasets' graphs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::AnalyticsError;
use crate::kg::KnowledgeGraph;
use crate::{Dataset, GOAL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nodes,
    Links,
}

impl Metric {
    pub fn of(&self, g: &KnowledgeGraph) -> f64 {
        match self {
            Metric::Nodes => g.nodes.len() as f64,
            Metric::Links => g.links.len() as f64,
        }
    }
}

/// Centre used for Levene's absolute deviations. `Mean` is the classic test;
/// `Median` is the Brown-Forsythe variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeveneCenter {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: Metric,
    pub datasets: (Dataset, Dataset),
    pub levene_center: LeveneCenter,
    pub levene_w: f64,
    pub levene_p: f64,
    pub welch_t: f64,
    pub welch_df: f64,
    pub welch_p: f64,
    pub group_means: (f64, f64),
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Levene's W and its p-value from F(k - 1, N - k). Each group needs at
/// least two observations.
pub fn levene(groups: &[&[f64]], center: LeveneCenter) -> (f64, f64) {
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    assert!(k >= 2 && groups.iter().all(|g| g.len() >= 2), "levene needs two groups of two");
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let c = match center {
                LeveneCenter::Mean => mean(g),
                LeveneCenter::Median => median(g),
            };
            g.iter().map(|v| (v - c).abs()).collect()
        })
        .collect();
    let z_means: Vec<f64> = z.iter().map(|g| mean(g)).collect();
    let grand = z.iter().flatten().sum::<f64>() / n as f64;
    let between: f64 = z.iter().zip(&z_means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let within: f64 = z
        .iter()
        .zip(&z_means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
    if within == 0.0 {
        return if between == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
    }
    let w = d2 / d1 * between / within;
    let f = FisherSnedecor::new(d1, d2).expect("positive degrees of freedom");
    (w, f.sf(w))
}

/// Welch's t, Welch-Satterthwaite degrees of freedom and two-sided p.
pub fn welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    assert!(a.len() >= 2 && b.len() >= 2, "welch needs two observations per group");
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    let diff = mean(a) - mean(b);
    if sa + sb == 0.0 {
        let df = na + nb - 2.0;
        return if diff == 0.0 { (0.0, df, 1.0) } else { (diff.signum() * f64::INFINITY, df, 0.0) };
    }
    let t = diff / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa.powi(2) / (na - 1.0) + sb.powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    (t, df, p)
}

/// Compares one metric over the 17 graphs of each dataset.
pub fn compare_datasets(
    metric: Metric,
    a: &[KnowledgeGraph],
    b: &[KnowledgeGraph],
    center: LeveneCenter,
) -> Result<ComparisonReport, AnalyticsError> {
    for g in [a, b] {
        if g.len() != GOAL_COUNT {
            return Err(AnalyticsError::IncompleteDataset { found: g.len() });
        }
    }
    let xa: Vec<f64> = a.iter().map(|g| metric.of(g)).collect();
    let xb: Vec<f64> = b.iter().map(|g| metric.of(g)).collect();
    let (levene_w, levene_p) = levene(&[&xa, &xb], center);
    let (welch_t, welch_df, welch_p) = welch(&xa, &xb);
    Ok(ComparisonReport {
        metric,
        datasets: (a[0].dataset.clone(), b[0].dataset.clone()),
        levene_center: center,
        levene_w,
        levene_p,
        welch_t,
        welch_df,
        welch_p,
        group_means: (mean(&xa), mean(&xb)),
    })
}
