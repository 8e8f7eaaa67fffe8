//! Day classification: standardize, describe each day by stacked HOG
//! descriptors, k-means the days, then split each cluster by profile shape.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    choose_k, select_groups, BasisSpec, ClusterError, FunctionalClusterResult, KSelection, DEFAULT_MIN_SPLIT_SILHOUETTE,
};
use crate::geo::CellRange;
use crate::hog::{daily_features, HogError, HogParams};
use crate::series::{compute_ddp, standardize, DdpCurve, GridSeries, SeriesError, StandardizeScope};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("need at least 3 days to cluster, got {0}")]
    TooFewDays(usize),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyParams {
    pub hog: HogParams,
    pub scope: StandardizeScope,
    pub k_min: usize,
    pub k_max: usize,
    pub g_max: usize,
    pub basis: BasisSpec,
    pub min_split_silhouette: f64,
    pub seed: u64,
    /// Region summed into the daily profiles; the whole grid when absent.
    pub ddp_region: Option<CellRange>,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            hog: HogParams::default(),
            scope: StandardizeScope::Global,
            k_min: 2,
            k_max: 6,
            g_max: 4,
            basis: BasisSpec::default(),
            min_split_silhouette: DEFAULT_MIN_SPLIT_SILHOUETTE,
            seed: 1,
            ddp_region: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayLabel {
    pub date: NaiveDate,
    pub kmeans_cluster: usize,
    pub functional_subgroup: usize,
}

impl DayLabel {
    /// Final group id, `"<cluster>-<subgroup>"`.
    pub fn group(&self) -> String {
        format!("{}-{}", self.kmeans_cluster, self.functional_subgroup)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayClassification {
    pub labels: Vec<DayLabel>,
    pub kmeans: KSelection,
    /// One entry per k-means cluster, in cluster order.
    pub subgroups: Vec<FunctionalClusterResult>,
    pub ddp: Vec<DdpCurve>,
    pub feature_len: usize,
}

impl DayClassification {
    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.labels.iter().map(DayLabel::group).collect();
        g.sort();
        g.dedup();
        g
    }

    pub fn curves_of(&self, group: &str) -> Vec<&DdpCurve> {
        self.labels.iter().zip(&self.ddp).filter(|(l, _)| l.group() == group).map(|(_, c)| c).collect()
    }
}

pub fn classify_days(series: &GridSeries, params: &ClassifyParams) -> Result<DayClassification, ClassifyError> {
    let n = series.days.len();
    if n < 3 {
        return Err(ClassifyError::TooFewDays(n));
    }
    let region = params.ddp_region.unwrap_or_else(|| series.grid.whole());
    let ddp = compute_ddp(series, &region)?;
    let standardized = standardize(series, params.scope)?;
    let features = daily_features(&standardized, &params.hog)?;
    drop(standardized);
    let vectors: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    cluster_days(&vectors, ddp, params)
}

/// Clustering stages alone, from precomputed daily feature vectors and the
/// matching daily profiles (same day order).
pub fn cluster_days<V: AsRef<[f64]> + Sync>(
    features: &[V],
    ddp: Vec<DdpCurve>,
    params: &ClassifyParams,
) -> Result<DayClassification, ClassifyError> {
    let n = features.len();
    if n < 3 {
        return Err(ClassifyError::TooFewDays(n));
    }
    if ddp.len() != n {
        return Err(ClassifyError::Mismatch(format!("{n} feature rows but {} daily profiles", ddp.len())));
    }
    let feature_len = features[0].as_ref().len();
    if features.iter().any(|f| f.as_ref().len() != feature_len) {
        return Err(ClassifyError::Mismatch("feature rows differ in length".into()));
    }
    let k_max = params.k_max.min(n - 1);
    let k_min = params.k_min.min(k_max);
    let kmeans = choose_k(features, k_min..=k_max, params.seed)?;
    log::info!("k-means chose k = {} over {k_min}..={k_max}", kmeans.k);

    let mut subgroups = Vec::with_capacity(kmeans.k);
    let mut sub_of_day = vec![0; n];
    for c in 0..kmeans.k {
        let members: Vec<usize> = (0..n).filter(|&d| kmeans.result.assignment[d] == c).collect();
        if members.is_empty() {
            continue;
        }
        let curves: Vec<Vec<f64>> = members.iter().map(|&d| ddp[d].values.clone()).collect();
        let seed = params.seed.wrapping_add(1 + c as u64);
        let fc = select_groups(c, &curves, params.g_max, params.basis, seed, params.min_split_silhouette)?;
        for (&d, &g) in members.iter().zip(&fc.assignment) {
            sub_of_day[d] = g;
        }
        subgroups.push(fc);
    }
    let labels = ddp
        .iter()
        .enumerate()
        .map(|(d, curve)| DayLabel {
            date: curve.day,
            kmeans_cluster: kmeans.result.assignment[d],
            functional_subgroup: sub_of_day[d],
        })
        .collect();
    Ok(DayClassification { labels, kmeans, subgroups, ddp, feature_len })
}
