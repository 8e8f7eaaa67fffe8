//! Modified band depth and functional boxplots of daily density profiles.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::DdpCurve;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxplotError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Smallest group that gets a boxplot; smaller groups are reported raw.
pub const MIN_BOXPLOT_CURVES: usize = 5;
pub const FENCE_FACTOR: f64 = 1.5;

fn check_curves(curves: &[Vec<f64>]) -> Result<usize, BoxplotError> {
    let t = curves.first().map_or(0, Vec::len);
    if t == 0 {
        return Err(BoxplotError::Shape("curves must be non-empty".into()));
    }
    if curves.iter().any(|c| c.len() != t) {
        return Err(BoxplotError::Shape("curves have different lengths".into()));
    }
    if curves.iter().flatten().any(|v| !v.is_finite()) {
        return Err(BoxplotError::Shape("curves contain non-finite values".into()));
    }
    Ok(t)
}

fn pairs(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

/// Modified band depth with bands of two curves. For each time point the
/// number of pairs whose band contains a curve is `C(n,2) - C(above,2) -
/// C(below,2)`, with strict above/below counts taken from the sorted values.
pub fn mbd(curves: &[Vec<f64>]) -> Result<Vec<f64>, BoxplotError> {
    let n = curves.len();
    if n < 2 {
        return Err(BoxplotError::Argument(format!("band depth needs at least 2 curves, got {n}")));
    }
    let t_len = check_curves(curves)?;
    let total = pairs(n as u64);
    let per_t: Vec<Vec<u64>> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let mut sorted: Vec<f64> = curves.iter().map(|c| c[t]).collect();
            sorted.sort_by(f64::total_cmp);
            curves
                .iter()
                .map(|c| {
                    let v = c[t];
                    let below = sorted.partition_point(|x| *x < v) as u64;
                    let above = (n - sorted.partition_point(|x| *x <= v)) as u64;
                    total - pairs(above) - pairs(below)
                })
                .collect()
        })
        .collect();
    let mut counts = vec![0u64; n];
    for row in &per_t {
        for (acc, c) in counts.iter_mut().zip(row) {
            *acc += c;
        }
    }
    let denom = (total * t_len as u64) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / denom).collect())
}

/// Pointwise lower and upper curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    fn envelope<'a>(curves: impl Iterator<Item = &'a Vec<f64>>, len: usize) -> Self {
        let mut lower = vec![f64::INFINITY; len];
        let mut upper = vec![f64::NEG_INFINITY; len];
        for c in curves {
            for t in 0..len {
                lower[t] = lower[t].min(c[t]);
                upper[t] = upper[t].max(c[t]);
            }
        }
        Self { lower, upper }
    }

    fn inflate(&self, factor: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let h = u - l;
                (l - factor * h, u + factor * h)
            })
            .unzip();
        Self { lower, upper }
    }

    pub fn contains(&self, curve: &[f64]) -> bool {
        curve.iter().enumerate().all(|(t, v)| *v >= self.lower[t] && *v <= self.upper[t])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalBoxplot {
    pub ids: Vec<String>,
    pub depth: Vec<f64>,
    pub median_id: String,
    pub median_curve: Vec<f64>,
    pub central_region: Band,
    pub fences: Band,
    /// Pointwise extremes of the curves that are not outliers.
    pub whiskers: Band,
    pub outlier_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoxplotOutcome {
    Boxplot(FunctionalBoxplot),
    /// Fewer than [`MIN_BOXPLOT_CURVES`] curves: emitted as a raw bundle.
    TooSmall { ids: Vec<String>, curves: Vec<Vec<f64>> },
}

impl BoxplotOutcome {
    pub fn boxplot(&self) -> Option<&FunctionalBoxplot> {
        match self {
            BoxplotOutcome::Boxplot(b) => Some(b),
            BoxplotOutcome::TooSmall { .. } => None,
        }
    }
}

/// Depth-ordered boxplot. Ties in depth go to the smaller id, both for the
/// median and for membership of the central region.
pub fn functional_boxplot(curves: &[Vec<f64>], ids: &[String]) -> Result<BoxplotOutcome, BoxplotError> {
    if curves.len() != ids.len() {
        return Err(BoxplotError::Shape(format!("{} curves but {} ids", curves.len(), ids.len())));
    }
    let n = curves.len();
    if n < MIN_BOXPLOT_CURVES {
        if n > 0 {
            check_curves(curves)?;
        }
        return Ok(BoxplotOutcome::TooSmall { ids: ids.to_vec(), curves: curves.to_vec() });
    }
    let len = check_curves(curves)?;
    let depth = mbd(curves)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]).then_with(|| ids[a].cmp(&ids[b])));

    let central_region = Band::envelope(order[..n.div_ceil(2)].iter().map(|&i| &curves[i]), len);
    let fences = central_region.inflate(FENCE_FACTOR);
    let is_outlier: Vec<bool> = curves.iter().map(|c| !fences.contains(c)).collect();
    let whiskers = Band::envelope(curves.iter().zip(&is_outlier).filter(|(_, o)| !**o).map(|(c, _)| c), len);
    let mut outlier_ids: Vec<String> = ids.iter().zip(&is_outlier).filter(|(_, o)| **o).map(|(i, _)| i.clone()).collect();
    outlier_ids.sort();

    let m = order[0];
    Ok(BoxplotOutcome::Boxplot(FunctionalBoxplot {
        ids: ids.to_vec(),
        depth,
        median_id: ids[m].clone(),
        median_curve: curves[m].clone(),
        central_region,
        fences,
        whiskers,
        outlier_ids,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPanel {
    /// `all`, or `YYYY-MM` when split by month.
    pub label: String,
    pub outcome: BoxplotOutcome,
}

/// Boxplots of one group's DDP curves, optionally one per calendar month.
pub fn group_boxplots(curves: &[DdpCurve], by_month: bool) -> Result<Vec<GroupPanel>, BoxplotError> {
    let mut buckets: BTreeMap<String, Vec<&DdpCurve>> = BTreeMap::new();
    for c in curves {
        let label = if by_month { month_label(c.day) } else { "all".to_string() };
        buckets.entry(label).or_default().push(c);
    }
    buckets
        .into_iter()
        .map(|(label, members)| {
            let ids: Vec<String> = members.iter().map(|c| c.day.to_string()).collect();
            let values: Vec<Vec<f64>> = members.iter().map(|c| c.values.clone()).collect();
            Ok(GroupPanel { label, outcome: functional_boxplot(&values, &ids)? })
        })
        .collect()
}

fn month_label(d: NaiveDate) -> String {
    format!("{:04}-{:02}", d.year(), d.month())
}
