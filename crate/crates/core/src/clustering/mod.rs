//! Relation clustering.
//!
//! k-means when the number of relations is known; otherwise either OPTICS
//! or the silhouette elbow rule, which picks k from a kernel-ridge-smoothed
//! silhouette-vs-k curve and then runs k-means. Distances are euclidean
//! throughout.

pub mod distance;
mod elbow;
mod kernel_ridge;
mod kmeans;
mod optics;
mod silhouette;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use elbow::{
    cluster_auto, default_grid, estimate_k_elbow, estimate_k_elbow_with, ElbowCurve, ElbowOptions,
    Selection,
};
pub use kernel_ridge::{median_bandwidth, KernelRidge};
pub use kmeans::{kmeans, kmeans_fit, kmeans_with, KMeansFit, KMeansParams};
pub use optics::{optics, optics_fit, optics_with, OpticsFit, OpticsParams};
pub use silhouette::{silhouette, silhouette_from_distances, silhouette_samples};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Kmeans,
    Optics,
    KmeansElbow,
}

/// Cluster id per instance; ids form the contiguous range `[0, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub instance_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub method: Method,
    pub seed: u64,
    pub params: BTreeMap<String, Value>,
}

/// Renumbers ids by order of first appearance.
pub(crate) fn canonical_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    instance_id: String,
    cluster_id: usize,
}

impl ClusterAssignment {
    /// Validates and stores labels, which must already be contiguous.
    pub fn new(
        instance_ids: Vec<String>,
        labels: Vec<usize>,
        method: Method,
        seed: u64,
        params: BTreeMap<String, Value>,
    ) -> Result<Self, ClusterError> {
        if instance_ids.len() != labels.len() {
            return Err(ClusterError::InvalidAssignment(format!(
                "{} ids for {} labels",
                instance_ids.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(ClusterError::InvalidAssignment("no instances".into()));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; k];
        labels.iter().for_each(|&l| used[l] = true);
        if let Some(gap) = used.iter().position(|u| !u) {
            return Err(ClusterError::InvalidAssignment(format!(
                "cluster ids are not contiguous: {gap} unused below {k}"
            )));
        }
        Ok(Self {
            instance_ids,
            labels,
            k,
            method,
            seed,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        self.labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }

    /// One `{"instance_id", "cluster_id"}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (id, &label) in self.instance_ids.iter().zip(&self.labels) {
            let row = JsonlRow {
                instance_id: id.clone(),
                cluster_id: label,
            };
            out.push_str(&serde_json::to_string(&row).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Parses the JSONL lines written by [`ClusterAssignment::to_jsonl`].
    pub fn from_jsonl(
        text: &str,
        method: Method,
        seed: u64,
        params: BTreeMap<String, Value>,
    ) -> Result<Self, ClusterError> {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: JsonlRow = serde_json::from_str(line).map_err(|e| {
                ClusterError::InvalidAssignment(format!("line {}: {e}", lineno + 1))
            })?;
            ids.push(row.instance_id);
            labels.push(row.cluster_id);
        }
        Self::new(ids, labels, method, seed, params)
    }
}
