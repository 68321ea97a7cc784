//! OPTICS ordering with ξ-steepness cluster extraction.
//!
//! The extraction follows the steep-area algorithm with the usual
//! corrections: steep-down points satisfy `r(p)·(1−ξ) ≥ r(p+1)`, the
//! cluster end is trimmed while `r(end−1) > r(start)`, and clusters are
//! shrunk until their end point's predecessor lies inside them. An infinite
//! reachability is appended to close clusters at the end of the plot. Points
//! outside every cluster become singleton clusters.

use std::collections::BTreeMap;

use serde_json::json;

use super::distance::{standard, PairwiseDistances};
use super::{canonical_labels, ClusterAssignment, ClusterError, Method};
use crate::encoder::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct OpticsParams {
    pub min_samples: usize,
    pub xi: f64,
    /// Defaults to `min_samples`.
    pub min_cluster_size: Option<usize>,
}

impl OpticsParams {
    pub fn new(min_samples: usize) -> Self {
        Self {
            min_samples,
            xi: 0.05,
            min_cluster_size: None,
        }
    }
}

impl Default for OpticsParams {
    fn default() -> Self {
        Self::new(5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticsFit {
    pub ordering: Vec<usize>,
    /// Indexed by point, not by position in the ordering.
    pub reachability: Vec<f64>,
    pub core_distances: Vec<f64>,
    pub predecessor: Vec<Option<usize>>,
    /// Inclusive (start, end) positions in the ordering.
    pub clusters: Vec<(usize, usize)>,
    /// Cluster id per point, `None` for noise.
    pub raw_labels: Vec<Option<usize>>,
}

fn core_distances(dist: &PairwiseDistances<'_>, min_samples: usize) -> Vec<f64> {
    let n = dist.len();
    let mut row = vec![0.0; n];
    (0..n)
        .map(|i| {
            dist.row_into(i, &mut row);
            let (_, kth, _) = row.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

fn ordering(dist: &PairwiseDistances<'_>, core: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<Option<usize>>) {
    let n = dist.len();
    let mut reach = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut processed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut row = vec![0.0; n];
    for _ in 0..n {
        // lowest reachability, ties to the lowest index
        let mut point = usize::MAX;
        for i in (0..n).filter(|&i| !processed[i]) {
            if point == usize::MAX || reach[i] < reach[point] {
                point = i;
            }
        }
        processed[point] = true;
        order.push(point);
        if core[point].is_finite() {
            dist.row_into(point, &mut row);
            for j in (0..n).filter(|&j| !processed[j]) {
                let r = row[j].max(core[point]);
                if r < reach[j] {
                    reach[j] = r;
                    pred[j] = Some(point);
                }
            }
        }
    }
    (order, reach, pred)
}

fn extend_region(steep: &[bool], xward: &[bool], start: usize, min_samples: usize) -> usize {
    let mut non_xward = 0;
    let mut end = start;
    for index in start..steep.len() {
        if steep[index] {
            non_xward = 0;
            end = index;
        } else if !xward[index] {
            non_xward += 1;
            if non_xward > min_samples {
                break;
            }
        } else {
            return end;
        }
    }
    end
}

struct SteepDown {
    start: usize,
    end: usize,
    mib: f64,
}

fn update_filter(areas: Vec<SteepDown>, mib: f64, xi_complement: f64, plot: &[f64]) -> Vec<SteepDown> {
    if mib.is_infinite() {
        return Vec::new();
    }
    areas
        .into_iter()
        .filter(|a| mib <= plot[a.start] * xi_complement)
        .map(|a| SteepDown {
            mib: a.mib.max(mib),
            ..a
        })
        .collect()
}

fn correct_predecessor(
    plot: &[f64],
    pred: &[Option<usize>],
    order: &[usize],
    start: usize,
    mut end: usize,
) -> Option<(usize, usize)> {
    while start < end {
        if plot[start] > plot[end] {
            return Some((start, end));
        }
        if let Some(p) = pred[end] {
            if order[start..end].contains(&p) {
                return Some((start, end));
            }
        }
        end -= 1;
    }
    None
}

/// ξ clusters as inclusive position ranges of the ordering, smaller clusters
/// before the clusters that enclose them.
fn xi_clusters(
    reach_ordered: &[f64],
    pred_ordered: &[Option<usize>],
    order: &[usize],
    xi: f64,
    min_samples: usize,
    min_cluster_size: usize,
) -> Vec<(usize, usize)> {
    let mut plot = reach_ordered.to_vec();
    plot.push(f64::INFINITY);
    let xi_complement = 1.0 - xi;
    let m = plot.len() - 1;

    let ratio: Vec<f64> = (0..m).map(|i| plot[i] / plot[i + 1]).collect();
    let steep_up: Vec<bool> = ratio.iter().map(|&r| r <= xi_complement).collect();
    let steep_down: Vec<bool> = ratio.iter().map(|&r| r >= 1.0 / xi_complement).collect();
    let down: Vec<bool> = ratio.iter().map(|&r| r > 1.0).collect();
    let up: Vec<bool> = ratio.iter().map(|&r| r < 1.0).collect();

    let mut areas: Vec<SteepDown> = Vec::new();
    let mut clusters = Vec::new();
    let mut index = 0;
    let mut mib = 0.0f64;

    for steep_index in (0..m).filter(|&i| steep_up[i] || steep_down[i]) {
        if steep_index < index {
            continue;
        }
        mib = plot[index..=steep_index].iter().copied().fold(mib, f64::max);

        if steep_down[steep_index] {
            areas = update_filter(areas, mib, xi_complement, &plot);
            let end = extend_region(&steep_down, &up, steep_index, min_samples);
            areas.push(SteepDown {
                start: steep_index,
                end,
                mib: 0.0,
            });
            index = end + 1;
            mib = plot[index];
        } else {
            areas = update_filter(areas, mib, xi_complement, &plot);
            let u_start = steep_index;
            let u_end = extend_region(&steep_up, &down, u_start, min_samples);
            index = u_end + 1;
            mib = plot[index];

            let mut found = Vec::new();
            for area in &areas {
                let mut c_start = area.start;
                let mut c_end = u_end;
                if plot[c_end + 1] * xi_complement < area.mib {
                    continue;
                }
                let d_max = plot[area.start];
                if d_max * xi_complement >= plot[c_end + 1] {
                    while plot[c_start + 1] > plot[c_end + 1] && c_start < area.end {
                        c_start += 1;
                    }
                } else if plot[c_end + 1] * xi_complement >= d_max {
                    while c_end > u_start && plot[c_end - 1] > d_max {
                        c_end -= 1;
                    }
                }
                let Some((s, e)) = correct_predecessor(&plot, pred_ordered, order, c_start, c_end) else {
                    continue;
                };
                if e - s + 1 < min_cluster_size || s > area.end || e < u_start {
                    continue;
                }
                found.push((s, e));
            }
            found.reverse();
            clusters.extend(found);
        }
    }
    clusters
}

fn xi_labels(order: &[usize], clusters: &[(usize, usize)]) -> Vec<Option<usize>> {
    let mut by_position: Vec<Option<usize>> = vec![None; order.len()];
    let mut next = 0;
    for &(s, e) in clusters {
        if by_position[s..=e].iter().all(Option::is_none) {
            by_position[s..=e].iter_mut().for_each(|l| *l = Some(next));
            next += 1;
        }
    }
    let mut labels = vec![None; order.len()];
    for (pos, &point) in order.iter().enumerate() {
        labels[point] = by_position[pos];
    }
    labels
}

pub fn optics_fit(emb: &EmbeddingMatrix, params: &OpticsParams) -> Result<OpticsFit, ClusterError> {
    let n = emb.rows();
    if params.min_samples < 2 {
        return Err(ClusterError::InvalidArgument("min_samples must be at least 2".into()));
    }
    if params.min_samples > n {
        return Err(ClusterError::InvalidArgument(format!(
            "min_samples = {} exceeds the number of points ({n})",
            params.min_samples
        )));
    }
    if !(0.0..1.0).contains(&params.xi) {
        return Err(ClusterError::InvalidArgument("xi must lie in [0, 1)".into()));
    }
    let x = standard(&emb.to_f64());
    let dist = PairwiseDistances::new(&x);
    let core = core_distances(&dist, params.min_samples);
    let (order, reachability, predecessor) = ordering(&dist, &core);

    let reach_ordered: Vec<f64> = order.iter().map(|&i| reachability[i]).collect();
    let pred_ordered: Vec<Option<usize>> = order.iter().map(|&i| predecessor[i]).collect();
    let clusters = xi_clusters(
        &reach_ordered,
        &pred_ordered,
        &order,
        params.xi,
        params.min_samples,
        params.min_cluster_size.unwrap_or(params.min_samples),
    );
    let raw_labels = xi_labels(&order, &clusters);
    Ok(OpticsFit {
        ordering: order,
        reachability,
        core_distances: core,
        predecessor,
        clusters,
        raw_labels,
    })
}

pub fn optics(emb: &EmbeddingMatrix, min_samples: usize) -> Result<ClusterAssignment, ClusterError> {
    optics_with(emb, &OpticsParams::new(min_samples))
}

/// OPTICS clustering; noise points become singleton clusters.
pub fn optics_with(emb: &EmbeddingMatrix, params: &OpticsParams) -> Result<ClusterAssignment, ClusterError> {
    let fit = optics_fit(emb, params)?;
    let clustered = fit.raw_labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut noise = 0;
    let labels: Vec<usize> = fit
        .raw_labels
        .iter()
        .map(|l| {
            l.unwrap_or_else(|| {
                noise += 1;
                clustered + noise - 1
            })
        })
        .collect();
    let (labels, _) = canonical_labels(&labels);
    let params = BTreeMap::from([
        ("min_samples".to_string(), json!(params.min_samples)),
        ("xi".to_string(), json!(params.xi)),
        (
            "min_cluster_size".to_string(),
            json!(params.min_cluster_size.unwrap_or(params.min_samples)),
        ),
        ("metric".to_string(), json!("euclidean")),
        ("dense_clusters".to_string(), json!(clustered)),
        ("noise_points".to_string(), json!(noise)),
        ("noise_policy".to_string(), json!("singleton")),
    ]);
    ClusterAssignment::new(emb.instance_ids().to_vec(), labels, Method::Optics, 0, params)
}
