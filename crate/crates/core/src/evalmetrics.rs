//! External clustering metrics: B³, V-measure and the adjusted Rand index.
//!
//! All three are functions of the gold × predicted contingency table.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::corpus::Dataset;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("label lists differ in length ({gold} gold vs {pred} predicted)")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("label lists are empty")]
    Empty,
    #[error("evaluation requires gold labels")]
    Unlabeled,
    #[error("{} instance(s) have no gold label: {}", .0.len(), .0.join(", "))]
    MissingIds(Vec<String>),
}

/// Gold class (rows) × predicted cluster (columns) co-occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
}

fn densify<T: Hash + Eq>(labels: &[T]) -> Vec<usize> {
    let mut ids: HashMap<&T, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect()
}

impl ContingencyTable {
    pub fn from_labels<G: Hash + Eq, P: Hash + Eq>(gold: &[G], pred: &[P]) -> Result<Self, MetricError> {
        Self::check(gold.len(), pred.len())?;
        Ok(Self::from_dense(&densify(gold), &densify(pred)))
    }

    /// Labels already given as small non-negative ids. Unused ids yield
    /// empty rows/columns, which no metric is sensitive to.
    pub fn from_dense(gold: &[usize], pred: &[usize]) -> Self {
        assert_eq!(gold.len(), pred.len(), "label lists differ in length");
        let rows = gold.iter().max().map_or(0, |m| m + 1);
        let cols = pred.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0u64; rows * cols];
        let mut row_sums = vec![0u64; rows];
        let mut col_sums = vec![0u64; cols];
        for (&g, &p) in gold.iter().zip(pred) {
            counts[g * cols + p] += 1;
            row_sums[g] += 1;
            col_sums[p] += 1;
        }
        Self {
            rows,
            cols,
            counts,
            row_sums,
            col_sums,
            total: gold.len() as u64,
        }
    }

    fn check(gold: usize, pred: usize) -> Result<(), MetricError> {
        if gold != pred {
            return Err(MetricError::LengthMismatch { gold, pred });
        }
        if gold == 0 {
            return Err(MetricError::Empty);
        }
        Ok(())
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.cols + pred]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(idx, &c)| (idx / self.cols, idx % self.cols, c))
    }

    /// Non-empty gold classes.
    pub fn gold_classes(&self) -> usize {
        self.row_sums.iter().filter(|&&s| s > 0).count()
    }

    /// Non-empty predicted clusters.
    pub fn pred_clusters(&self) -> usize {
        self.col_sums.iter().filter(|&&s| s > 0).count()
    }

    /// B³ (precision, recall, f1) with unweighted per-instance averaging.
    pub fn b_cubed(&self) -> (f64, f64, f64) {
        let n = self.total as f64;
        let (mut precision, mut recall) = (0.0, 0.0);
        for (g, p, c) in self.cells() {
            let sq = (c * c) as f64;
            precision += sq / self.col_sums[p] as f64;
            recall += sq / self.row_sums[g] as f64;
        }
        let (precision, recall) = (precision / n, recall / n);
        (precision, recall, harmonic(precision, recall))
    }

    /// V-measure (homogeneity, completeness, f1), natural-log entropies.
    pub fn v_measure(&self) -> (f64, f64, f64) {
        let n = self.total as f64;
        let entropy = |sums: &[u64]| -> f64 {
            -sums
                .iter()
                .filter(|&&s| s > 0)
                .map(|&s| {
                    let p = s as f64 / n;
                    p * p.ln()
                })
                .sum::<f64>()
        };
        let h_gold = entropy(&self.row_sums);
        let h_pred = entropy(&self.col_sums);
        let (mut h_gold_given_pred, mut h_pred_given_gold) = (0.0, 0.0);
        for (g, p, c) in self.cells() {
            let c = c as f64;
            h_gold_given_pred -= c / n * (c / self.col_sums[p] as f64).ln();
            h_pred_given_gold -= c / n * (c / self.row_sums[g] as f64).ln();
        }
        let ratio = |conditional: f64, marginal: f64| {
            if marginal == 0.0 {
                1.0
            } else {
                (1.0 - conditional / marginal).clamp(0.0, 1.0)
            }
        };
        let homogeneity = ratio(h_gold_given_pred, h_gold);
        let completeness = ratio(h_pred_given_gold, h_pred);
        (homogeneity, completeness, harmonic(homogeneity, completeness))
    }

    /// Adjusted Rand index; 1 when the chance-corrected denominator vanishes.
    pub fn ari(&self) -> f64 {
        let pairs = |c: u64| c * c.saturating_sub(1) / 2;
        let index: u64 = self.cells().map(|(_, _, c)| pairs(c)).sum();
        let sum_gold: u64 = self.row_sums.iter().map(|&a| pairs(a)).sum();
        let sum_pred: u64 = self.col_sums.iter().map(|&b| pairs(b)).sum();
        let all = pairs(self.total);
        if all == 0 {
            return 1.0;
        }
        let expected = sum_gold as f64 * sum_pred as f64 / all as f64;
        let max = 0.5 * (sum_gold + sum_pred) as f64;
        if max == expected {
            return 1.0;
        }
        (index as f64 - expected) / (max - expected)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn b_cubed<G: Hash + Eq, P: Hash + Eq>(gold: &[G], pred: &[P]) -> Result<(f64, f64, f64), MetricError> {
    Ok(ContingencyTable::from_labels(gold, pred)?.b_cubed())
}

pub fn v_measure<G: Hash + Eq, P: Hash + Eq>(gold: &[G], pred: &[P]) -> Result<(f64, f64, f64), MetricError> {
    Ok(ContingencyTable::from_labels(gold, pred)?.v_measure())
}

pub fn ari<G: Hash + Eq, P: Hash + Eq>(gold: &[G], pred: &[P]) -> Result<f64, MetricError> {
    Ok(ContingencyTable::from_labels(gold, pred)?.ari())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub b3_precision: f64,
    pub b3_recall: f64,
    pub b3_f1: f64,
    pub v_homogeneity: f64,
    pub v_completeness: f64,
    pub v_f1: f64,
    pub ari: f64,
    pub n: usize,
    pub k_gold: usize,
    pub k_pred: usize,
}

impl EvaluationReport {
    pub fn from_table(table: &ContingencyTable) -> Self {
        let (b3_precision, b3_recall, b3_f1) = table.b_cubed();
        let (v_homogeneity, v_completeness, v_f1) = table.v_measure();
        Self {
            b3_precision,
            b3_recall,
            b3_f1,
            v_homogeneity,
            v_completeness,
            v_f1,
            ari: table.ari(),
            n: table.total() as usize,
            k_gold: table.gold_classes(),
            k_pred: table.pred_clusters(),
        }
    }

    pub fn from_labels<G: Hash + Eq, P: Hash + Eq>(gold: &[G], pred: &[P]) -> Result<Self, MetricError> {
        Ok(Self::from_table(&ContingencyTable::from_labels(gold, pred)?))
    }
}

/// Gold labels for the assignment's instances, joined by instance id.
pub(crate) fn join_gold<'a>(
    dataset: &'a Dataset,
    assignment: &ClusterAssignment,
) -> Result<Vec<&'a str>, MetricError> {
    if !dataset.is_labeled() {
        return Err(MetricError::Unlabeled);
    }
    let gold = dataset.gold_by_id();
    let mut labels = Vec::with_capacity(assignment.len());
    let mut missing = Vec::new();
    for id in &assignment.instance_ids {
        match gold.get(id.as_str()) {
            Some(Some(label)) => labels.push(*label),
            _ => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(MetricError::MissingIds(missing));
    }
    Ok(labels)
}

/// Scores an assignment against the dataset's gold labels.
pub fn evaluate(dataset: &Dataset, assignment: &ClusterAssignment) -> Result<EvaluationReport, MetricError> {
    let gold = join_gold(dataset, assignment)?;
    EvaluationReport::from_labels(&gold, &assignment.labels)
}
