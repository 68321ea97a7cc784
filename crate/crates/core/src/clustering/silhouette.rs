use rayon::prelude::*;

use super::distance::{standard, PairwiseDistances};
use super::{canonical_labels, ClusterError};
use crate::encoder::EmbeddingMatrix;

/// Mean silhouette coefficient over all points. Singleton clusters score 0.
pub fn silhouette(emb: &EmbeddingMatrix, labels: &[usize]) -> Result<f64, ClusterError> {
    if labels.len() != emb.rows() {
        return Err(ClusterError::InvalidArgument(format!(
            "{} labels for {} points",
            labels.len(),
            emb.rows()
        )));
    }
    let x = standard(&emb.to_f64());
    silhouette_from_distances(&PairwiseDistances::new(&x), labels)
}

pub fn silhouette_from_distances(dist: &PairwiseDistances<'_>, labels: &[usize]) -> Result<f64, ClusterError> {
    let scores = samples_from_distances(dist, labels)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-point silhouette values `s(i)`.
pub fn silhouette_samples(emb: &EmbeddingMatrix, labels: &[usize]) -> Result<Vec<f64>, ClusterError> {
    if labels.len() != emb.rows() {
        return Err(ClusterError::InvalidArgument(format!(
            "{} labels for {} points",
            labels.len(),
            emb.rows()
        )));
    }
    let x = standard(&emb.to_f64());
    samples_from_distances(&PairwiseDistances::new(&x), labels)
}

fn samples_from_distances(dist: &PairwiseDistances<'_>, labels: &[usize]) -> Result<Vec<f64>, ClusterError> {
    let n = dist.len();
    if labels.len() != n {
        return Err(ClusterError::InvalidArgument(format!("{} labels for {n} points", labels.len())));
    }
    let (labels, k) = canonical_labels(labels);
    if k < 2 {
        return Err(ClusterError::InvalidArgument(
            "silhouette needs at least 2 distinct labels".into(),
        ));
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);

    Ok((0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; k]),
            |(row, sums), i| {
                let own = labels[i];
                if sizes[own] == 1 {
                    return 0.0;
                }
                dist.row_into(i, row);
                sums.iter_mut().for_each(|s| *s = 0.0);
                for (&d, &l) in row.iter().zip(&labels) {
                    sums[l] += d;
                }
                let a = sums[own] / (sizes[own] - 1) as f64;
                let b = (0..k)
                    .filter(|&c| c != own)
                    .map(|c| sums[c] / sizes[c] as f64)
                    .fold(f64::INFINITY, f64::min);
                let denom = a.max(b);
                if denom > 0.0 {
                    (b - a) / denom
                } else {
                    0.0
                }
            },
        )
        .collect())
}
