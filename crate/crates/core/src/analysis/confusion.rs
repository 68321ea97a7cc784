//! Cluster × relation confusion matrices and their diagonal reordering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::corpus::Dataset;
use crate::evalmetrics::{join_gold, MetricError};

/// Raw counts with rows = predicted clusters and columns = gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[r][c]`, indexed by display position.
    pub counts: Vec<Vec<u64>>,
    /// Cluster id shown in each row.
    pub row_clusters: Vec<usize>,
    /// Gold label shown in each column.
    pub col_labels: Vec<String>,
    /// Cluster → matched gold label; empty until [`diagonalize`].
    pub matching: BTreeMap<usize, Option<String>>,
}

/// Counts before any reordering: rows by cluster id, columns by sorted label.
pub fn confusion(dataset: &Dataset, assignment: &ClusterAssignment) -> Result<ConfusionMatrix, MetricError> {
    let gold = join_gold(dataset, assignment)?;
    let mut col_labels: Vec<String> = gold.iter().map(|g| g.to_string()).collect();
    col_labels.sort();
    col_labels.dedup();
    let col_of: BTreeMap<&str, usize> = col_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut counts = vec![vec![0u64; col_labels.len()]; assignment.k];
    for (label, &cluster) in gold.iter().zip(&assignment.labels) {
        counts[cluster][col_of[label]] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        row_clusters: (0..assignment.k).collect(),
        col_labels,
        matching: BTreeMap::new(),
    })
}

/// Maximum-weight one-to-one matching of rows to columns, as `(row, col)`
/// pairs. Every row is matched when rows ≤ columns, and vice versa.
pub fn max_weight_matching(counts: &[Vec<u64>]) -> Vec<(usize, usize)> {
    let rows = counts.len();
    let cols = counts.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // kuhn_munkres needs rows ≤ columns
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let weights = Matrix::from_fn(r, c, |(i, j)| {
        let v = if transpose { counts[j][i] } else { counts[i][j] };
        v as i64
    });
    let (_, assignment) = kuhn_munkres(&weights);
    assignment
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transpose { (j, i) } else { (i, j) })
        .collect()
}

fn by_marginal_desc(indices: &mut [usize], marginal: impl Fn(usize) -> u64) {
    indices.sort_by(|&a, &b| marginal(b).cmp(&marginal(a)).then(a.cmp(&b)));
}

/// Reorders rows and columns so the optimal cluster↔label matching lies on
/// the leading diagonal, largest matched count first. Unmatched rows and
/// columns (including zero-count matches) follow in descending marginal
/// order.
pub fn diagonalize(m: &ConfusionMatrix) -> ConfusionMatrix {
    let rows = m.counts.len();
    let cols = m.col_labels.len();
    let mut pairs: Vec<(usize, usize)> = max_weight_matching(&m.counts)
        .into_iter()
        .filter(|&(r, c)| m.counts[r][c] > 0)
        .collect();
    pairs.sort_by(|a, b| m.counts[b.0][b.1].cmp(&m.counts[a.0][a.1]).then(a.cmp(b)));

    let mut row_matched = vec![false; rows];
    let mut col_matched = vec![false; cols];
    for &(r, c) in &pairs {
        row_matched[r] = true;
        col_matched[c] = true;
    }
    let row_sum = |r: usize| m.counts[r].iter().sum::<u64>();
    let col_sum = |c: usize| m.counts.iter().map(|row| row[c]).sum::<u64>();
    let mut rest_rows: Vec<usize> = (0..rows).filter(|&r| !row_matched[r]).collect();
    let mut rest_cols: Vec<usize> = (0..cols).filter(|&c| !col_matched[c]).collect();
    by_marginal_desc(&mut rest_rows, row_sum);
    by_marginal_desc(&mut rest_cols, col_sum);

    let row_order: Vec<usize> = pairs.iter().map(|p| p.0).chain(rest_rows).collect();
    let col_order: Vec<usize> = pairs.iter().map(|p| p.1).chain(rest_cols).collect();

    let mut matching: BTreeMap<usize, Option<String>> =
        m.row_clusters.iter().map(|&id| (id, None)).collect();
    for &(r, c) in &pairs {
        matching.insert(m.row_clusters[r], Some(m.col_labels[c].clone()));
    }
    ConfusionMatrix {
        counts: row_order
            .iter()
            .map(|&r| col_order.iter().map(|&c| m.counts[r][c]).collect())
            .collect(),
        row_clusters: row_order.iter().map(|&r| m.row_clusters[r]).collect(),
        col_labels: col_order.iter().map(|&c| m.col_labels[c].clone()).collect(),
        matching,
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Sum of the leading diagonal.
    pub fn diagonal_mass(&self) -> u64 {
        self.counts.iter().enumerate().filter_map(|(i, row)| row.get(i)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }

    /// Header row `cluster,<label>…`, then one `c<id>,<counts>…` row per
    /// cluster.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("cluster".to_string()).chain(self.col_labels.iter().cloned());
        writer.write_record(header).expect("in-memory write");
        for (id, row) in self.row_clusters.iter().zip(&self.counts) {
            let record = std::iter::once(format!("c{id}")).chain(row.iter().map(u64::to_string));
            writer.write_record(record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }

    /// Plain-text (P2) grayscale heatmap, one pixel per cell: white for
    /// zero, black for the largest count.
    pub fn to_pgm(&self) -> String {
        let max = self.counts.iter().flatten().copied().max().unwrap_or(0).max(1);
        let mut out = format!("P2\n{} {}\n255\n", self.col_labels.len(), self.counts.len());
        for row in &self.counts {
            let line: Vec<String> = row
                .iter()
                .map(|&v| (255 - (255 * v + max / 2) / max).to_string())
                .collect();
            writeln!(out, "{}", line.join(" ")).expect("write to string");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        let cols = counts[0].len();
        ConfusionMatrix {
            row_clusters: (0..counts.len()).collect(),
            col_labels: (0..cols).map(|c| format!("L{c}")).collect(),
            counts,
            matching: BTreeMap::new(),
        }
    }

    #[test]
    fn shuffled_identity_restored() {
        let m = matrix(vec![vec![0, 0, 7], vec![9, 0, 0], vec![0, 8, 0]]);
        let d = diagonalize(&m);
        assert_eq!(d.counts, vec![vec![9, 0, 0], vec![0, 8, 0], vec![0, 0, 7]]);
        assert_eq!(d.row_clusters, vec![1, 2, 0]);
        assert_eq!(d.matching[&0], Some("L2".to_string()));
    }

    #[test]
    fn rectangular_example() {
        let m = matrix(vec![vec![5, 0, 0], vec![0, 4, 3]]);
        let d = diagonalize(&m);
        assert_eq!(d.diagonal_mass(), 9);
        assert_eq!(d.col_labels, vec!["L0", "L1", "L2"]);
        assert_eq!(d.counts, m.counts);
    }

    #[test]
    fn zero_matches_are_unmatched() {
        // row 2 can only be matched with a zero
        let m = matrix(vec![vec![3, 0], vec![0, 2], vec![0, 0]]);
        let d = diagonalize(&m);
        assert_eq!(d.matching[&2], None);
        assert_eq!(d.row_clusters, vec![0, 1, 2]);
    }

    #[test]
    fn csv_and_pgm_layout() {
        let m = matrix(vec![vec![2, 0], vec![1, 1]]);
        let csv = m.to_csv();
        assert_eq!(csv, "cluster,L0,L1\nc0,2,0\nc1,1,1\n");
        let pgm = m.to_pgm();
        assert_eq!(pgm, "P2\n2 2\n255\n0 255\n127 127\n");
    }
}
