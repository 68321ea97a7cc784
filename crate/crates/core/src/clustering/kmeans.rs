//! Lloyd's k-means with greedy k-means++ seeding.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::distance::{sq_distances_gram, sq_euclidean, sq_norms, standard};
use super::{canonical_labels, ClusterAssignment, ClusterError, Method};
use crate::encoder::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent seedings; the run with the lowest inertia wins.
    pub n_init: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
        }
    }

    pub fn to_params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("k".to_string(), json!(self.k)),
            ("init".to_string(), json!("k-means++")),
            ("max_iter".to_string(), json!(self.max_iter)),
            ("tol".to_string(), json!(self.tol)),
            ("n_init".to_string(), json!(self.n_init)),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Canonical labels (ids numbered by first appearance).
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning run.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn exact_inertia(x: &Array2<f64>, centroids: &Array2<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            sq_euclidean(
                x.row(i).as_slice().expect("standard layout"),
                centroids.row(l).as_slice().expect("standard layout"),
            )
        })
        .sum()
}

/// Greedy k-means++: each new center is the best of `2 + ln k` candidates
/// drawn proportionally to the squared distance to the chosen centers.
fn kmeans_plus_plus(x: &Array2<f64>, norms: &Array1<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut closest = sq_distances_gram(x, norms, &x.select(Axis(0), &[first]))
        .column(0)
        .to_owned();
    let mut potential: f64 = closest.sum();

    for c in 1..k {
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &d in closest.iter() {
            acc += d;
            cumulative.push(acc);
        }
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                let target = rng.random::<f64>() * potential;
                cumulative.partition_point(|&v| v < target).min(n - 1)
            })
            .collect();
        let cand_dist = sq_distances_gram(x, norms, &x.select(Axis(0), &candidates));

        let mut best: Option<(f64, usize)> = None;
        for t in 0..candidates.len() {
            let pot: f64 = closest
                .iter()
                .zip(cand_dist.column(t))
                .map(|(a, b)| a.min(*b))
                .sum();
            if best.is_none_or(|(p, _)| pot < p) {
                best = Some((pot, t));
            }
        }
        let (pot, t) = best.expect("at least two trials");
        centers.row_mut(c).assign(&x.row(candidates[t]));
        closest.zip_mut_with(&cand_dist.column(t), |a, b| *a = a.min(*b));
        potential = pot;
    }
    centers
}

fn assign(x: &Array2<f64>, norms: &Array1<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let d = sq_distances_gram(x, norms, centroids);
    d.outer_iter()
        .map(|row| {
            let mut best = (0, f64::INFINITY);
            for (j, &v) in row.iter().enumerate() {
                if v < best.1 {
                    best = (j, v);
                }
            }
            best
        })
        .unzip()
}

/// Moves points into empty clusters, farthest-from-centroid first, taking
/// them only from clusters that keep at least one member.
fn fill_empty(labels: &mut [usize], dist: &[f64], k: usize) {
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if !sizes.contains(&0) {
        return;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut donors = order.into_iter();
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        for i in donors.by_ref() {
            if sizes[labels[i]] > 1 {
                sizes[labels[i]] -= 1;
                labels[i] = empty;
                sizes[empty] = 1;
                break;
            }
        }
    }
}

fn means(x: &Array2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        sums.row_mut(l).scaled_add(1.0, &x.row(i));
        counts[l] += 1;
    }
    for (mut row, &c) in sums.outer_iter_mut().zip(&counts) {
        if c > 0 {
            row.mapv_inplace(|v| v / c as f64);
        }
    }
    sums
}

fn lloyd(x: &Array2<f64>, norms: &Array1<f64>, init: Array2<f64>, params: &KMeansParams) -> KMeansFit {
    let k = params.k;
    let mut centroids = init;
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let (mut labels, dist) = assign(x, norms, &centroids);
        history.push(exact_inertia(x, &centroids, &labels));
        fill_empty(&mut labels, &dist, k);
        let updated = means(x, &labels, k);
        let shift = centroids
            .outer_iter()
            .zip(updated.outer_iter())
            .map(|(a, b)| {
                sq_euclidean(a.as_slice().expect("standard"), b.as_slice().expect("standard"))
            })
            .fold(0.0f64, f64::max)
            .sqrt();
        centroids = updated;
        #[cfg(debug_assertions)]
        if let [.., prev, last] = history[..] {
            debug_assert!(last <= prev * (1.0 + 1e-9) + 1e-12, "inertia increased: {prev} -> {last}");
        }
        if shift < params.tol {
            break;
        }
    }

    let (mut labels, dist) = assign(x, norms, &centroids);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.contains(&0) {
        fill_empty(&mut labels, &dist, k);
        centroids = means(x, &labels, k);
    }
    let inertia = exact_inertia(x, &centroids, &labels);
    KMeansFit {
        labels,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    }
}

fn check_k(n: usize, k: usize) -> Result<(), ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(ClusterError::InvalidArgument(format!(
            "k = {k} exceeds the number of points ({n})"
        )));
    }
    Ok(())
}

/// Runs k-means on the rows of `x`. Fully determined by `params`.
pub fn kmeans_fit(x: &Array2<f64>, params: &KMeansParams) -> Result<KMeansFit, ClusterError> {
    check_k(x.nrows(), params.k)?;
    if params.n_init == 0 {
        return Err(ClusterError::InvalidArgument("n_init must be at least 1".into()));
    }
    let x = standard(x);
    let norms = sq_norms(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut best: Option<KMeansFit> = None;
    for _ in 0..params.n_init {
        let init = kmeans_plus_plus(&x, &norms, params.k, &mut rng);
        let fit = lloyd(&x, &norms, init, params);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("n_init >= 1");

    let (labels, _) = canonical_labels(&fit.labels);
    let mut order = vec![0usize; params.k];
    for (&old, &new) in fit.labels.iter().zip(&labels) {
        order[new] = old;
    }
    fit.centroids = fit.centroids.select(Axis(0), &order);
    fit.labels = labels;
    Ok(fit)
}

pub fn kmeans(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    kmeans_with(emb, &KMeansParams::new(k, seed))
}

pub fn kmeans_with(emb: &EmbeddingMatrix, params: &KMeansParams) -> Result<ClusterAssignment, ClusterError> {
    check_k(emb.rows(), params.k)?;
    let fit = kmeans_fit(&emb.to_f64(), params)?;
    let mut p = params.to_params();
    p.insert("inertia".into(), json!(fit.inertia));
    ClusterAssignment::new(emb.instance_ids().to_vec(), fit.labels, Method::Kmeans, params.seed, p)
}
