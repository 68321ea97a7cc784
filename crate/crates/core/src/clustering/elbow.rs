//! Estimating the number of relations with the silhouette elbow rule.
//!
//! k-means runs for every k of a grid and the mean silhouette of each
//! clustering is recorded. The raw curve is smoothed by gaussian kernel
//! ridge regression (bandwidth: median pairwise gap between grid values;
//! ridge: 1e-3 × grid size). When the smoothed curve peaks before the end of
//! the grid, the estimate is the best raw score among the grid point nearest
//! the peak and its two grid neighbours: wide kernels blur a sharp maximum
//! by about half a step, which is enough to land one cluster off. A curve that
//! is still rising at the last grid point falls back to knee detection: the
//! grid point farthest from the chord joining the curve's end points.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::distance::{standard, PairwiseDistances};
use super::kernel_ridge::{median_bandwidth, KernelRidge};
use super::kmeans::{kmeans_fit, kmeans_with, KMeansParams};
use super::silhouette::silhouette_from_distances;
use super::{ClusterAssignment, ClusterError, Method};
use crate::encoder::EmbeddingMatrix;

const MIN_GRID_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Peak of the smoothed curve.
    Maximum,
    /// Chord-distance knee of a curve rising to the end of the grid.
    Knee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub k_values: Vec<usize>,
    pub silhouette_raw: Vec<f64>,
    pub silhouette_smoothed: Vec<f64>,
    pub k_hat: usize,
    pub selection: Selection,
    /// Argmax of the smoothed curve over the integers spanned by the grid.
    pub smoothed_peak: usize,
    pub bandwidth: f64,
    pub ridge: f64,
    pub seed: u64,
    pub n_init: usize,
}

impl ElbowCurve {
    /// `k,raw,smoothed` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,raw,smoothed\n");
        for ((k, raw), smooth) in self
            .k_values
            .iter()
            .zip(&self.silhouette_raw)
            .zip(&self.silhouette_smoothed)
        {
            writeln!(out, "{k},{raw},{smooth}").expect("write to string");
        }
        out
    }

    pub fn to_params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("k_grid".to_string(), json!(self.k_values)),
            ("k_hat".to_string(), json!(self.k_hat)),
            ("selection".to_string(), json!(self.selection)),
            ("smoothed_peak".to_string(), json!(self.smoothed_peak)),
            ("kernel".to_string(), json!("gaussian")),
            ("bandwidth".to_string(), json!(self.bandwidth)),
            ("ridge".to_string(), json!(self.ridge)),
            ("sweep_n_init".to_string(), json!(self.n_init)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowOptions {
    pub seed: u64,
    /// k-means seedings per grid point during the sweep.
    pub n_init: usize,
}

impl ElbowOptions {
    pub fn new(seed: u64) -> Self {
        Self { seed, n_init: 10 }
    }
}

/// `2..=20`, then `24..=60` by 4, then `70..=2√n` by 10, capped at `n - 1`.
pub fn default_grid(n: usize) -> Vec<usize> {
    let upper = (2.0 * (n as f64).sqrt()).floor() as usize;
    (2..=20)
        .chain((24..=60).step_by(4))
        .chain((70..=upper.max(70)).step_by(10).filter(|&k| k <= upper))
        .filter(|&k| k < n)
        .collect()
}

fn distinct_rows(emb: &EmbeddingMatrix, stop_at: usize) -> usize {
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    for i in 0..emb.rows() {
        seen.insert(emb.row(i).iter().map(|v| v.to_bits()).collect());
        if seen.len() >= stop_at {
            break;
        }
    }
    seen.len()
}

fn select_k(k_values: &[usize], raw: &[f64], model: &KernelRidge, smoothed: &[f64]) -> (usize, usize, Selection) {
    let (k_min, k_max) = (k_values[0], *k_values.last().expect("non-empty grid"));
    let mut peak = (k_min, f64::NEG_INFINITY);
    for k in k_min..=k_max {
        let v = model.predict(k as f64);
        if v > peak.1 {
            peak = (k, v);
        }
    }
    if peak.0 < k_max {
        let nearest = (0..k_values.len())
            .min_by_key(|&i| (k_values[i].abs_diff(peak.0), i))
            .expect("non-empty grid");
        let lo = nearest.saturating_sub(1);
        let hi = (nearest + 1).min(k_values.len() - 1);
        let mut best = nearest;
        for i in lo..=hi {
            if raw[i] > raw[best] {
                best = i;
            }
        }
        return (k_values[best], peak.0, Selection::Maximum);
    }

    let (y_first, y_last) = (smoothed[0], *smoothed.last().expect("non-empty"));
    let y_lo = smoothed.iter().copied().fold(f64::INFINITY, f64::min);
    let y_hi = smoothed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_span = if y_hi > y_lo { y_hi - y_lo } else { 1.0 };
    let x_span = (k_max - k_min) as f64;
    let norm = |k: usize, y: f64| ((k - k_min) as f64 / x_span, (y - y_lo) / y_span);
    let (x0, y0) = norm(k_min, y_first);
    let (x1, y1) = norm(k_max, y_last);
    let chord_len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best = (k_values[1], f64::NEG_INFINITY);
    for (&k, &y) in k_values.iter().zip(smoothed).skip(1).take(k_values.len() - 2) {
        let (x, y) = norm(k, y);
        let d = ((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0).abs() / chord_len;
        if d > best.1 {
            best = (k, d);
        }
    }
    (best.0, peak.0, Selection::Knee)
}

/// Fits the smoothed curve and selects k from given raw silhouette values.
pub(crate) fn curve_from_scores(
    k_values: Vec<usize>,
    silhouette_raw: Vec<f64>,
    seed: u64,
    n_init: usize,
) -> ElbowCurve {
    let xs: Vec<f64> = k_values.iter().map(|&k| k as f64).collect();
    let bandwidth = median_bandwidth(&xs);
    let ridge = 1e-3 * k_values.len() as f64;
    let model = KernelRidge::fit(&xs, &silhouette_raw, bandwidth, ridge);
    let silhouette_smoothed: Vec<f64> = xs.iter().map(|&x| model.predict(x)).collect();
    let (k_hat, smoothed_peak, selection) = select_k(&k_values, &silhouette_raw, &model, &silhouette_smoothed);
    ElbowCurve {
        k_values,
        silhouette_raw,
        silhouette_smoothed,
        k_hat,
        selection,
        smoothed_peak,
        bandwidth,
        ridge,
        seed,
        n_init,
    }
}

pub fn estimate_k_elbow(emb: &EmbeddingMatrix, k_grid: &[usize], seed: u64) -> Result<ElbowCurve, ClusterError> {
    estimate_k_elbow_with(emb, k_grid, &ElbowOptions::new(seed))
}

pub fn estimate_k_elbow_with(
    emb: &EmbeddingMatrix,
    k_grid: &[usize],
    options: &ElbowOptions,
) -> Result<ElbowCurve, ClusterError> {
    let n = emb.rows();
    let mut k_values = k_grid.to_vec();
    k_values.sort_unstable();
    k_values.dedup();
    if k_values.len() < MIN_GRID_POINTS {
        return Err(ClusterError::InvalidArgument(format!(
            "the k grid needs at least {MIN_GRID_POINTS} distinct values, got {}",
            k_values.len()
        )));
    }
    if let Some(&bad) = k_values.iter().find(|&&k| k < 2 || k > n) {
        return Err(ClusterError::InvalidArgument(format!(
            "grid value {bad} outside [2, {n}]"
        )));
    }
    if distinct_rows(emb, 2) < 2 {
        return Err(ClusterError::Degenerate(
            "all embeddings are identical; the silhouette is undefined".into(),
        ));
    }

    let x = standard(&emb.to_f64());
    let dist = PairwiseDistances::new(&x);
    let mut raw = Vec::with_capacity(k_values.len());
    for &k in &k_values {
        let params = KMeansParams {
            n_init: options.n_init,
            ..KMeansParams::new(k, options.seed)
        };
        let fit = kmeans_fit(&x, &params)?;
        let s = silhouette_from_distances(&dist, &fit.labels)?;
        log::debug!("elbow sweep: k = {k}, silhouette = {s:.6}");
        raw.push(s);
    }
    Ok(curve_from_scores(k_values, raw, options.seed, options.n_init))
}

/// Elbow estimate over the default grid, then k-means with the estimate.
pub fn cluster_auto(emb: &EmbeddingMatrix, seed: u64) -> Result<(ElbowCurve, ClusterAssignment), ClusterError> {
    if emb.rows() < 10 {
        return Err(ClusterError::InvalidArgument(format!(
            "automatic clustering needs at least 10 points, got {}",
            emb.rows()
        )));
    }
    let curve = estimate_k_elbow(emb, &default_grid(emb.rows()), seed)?;
    let mut assignment = kmeans_with(emb, &KMeansParams::new(curve.k_hat, seed))?;
    assignment.method = Method::KmeansElbow;
    assignment.params.extend(curve.to_params());
    Ok((curve, assignment))
}
