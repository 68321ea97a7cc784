//! What a cluster contains, and what the masked LM calls it.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::corpus::Dataset;
use crate::encoder::{top_tokens_for, BackendError, MlmBackend};
use crate::evalmetrics::{join_gold, MetricError};
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelShare {
    pub label: String,
    pub count: usize,
    /// Share of the cluster in percent.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub token: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster_id: usize,
    pub size: usize,
    /// Descending share; empty when no gold labels were used.
    pub composition: Vec<LabelShare>,
    pub top_tokens: Option<Vec<TokenCount>>,
}

impl ClusterReport {
    /// Integer percentages by largest remainder, so they sum to exactly 100
    /// (0 for an empty composition).
    pub fn rounded_percentages(&self) -> Vec<u32> {
        let mut floors: Vec<u32> = self.composition.iter().map(|s| s.percent.floor() as u32).collect();
        let short = 100u32.saturating_sub(floors.iter().sum());
        if self.composition.is_empty() {
            return floors;
        }
        let mut order: Vec<usize> = (0..floors.len()).collect();
        let rem = |i: usize| self.composition[i].percent - self.composition[i].percent.floor();
        order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
        for &i in order.iter().take(short as usize) {
            floors[i] += 1;
        }
        floors
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("unknown cluster id {id} (k = {k})")]
    UnknownCluster { id: usize, k: usize },
    #[error("{0}")]
    Misaligned(String),
    #[error("m must be at least 1")]
    ZeroTokens,
    #[error("naming failed for {instance_id}: {source}")]
    Backend {
        instance_id: String,
        #[source]
        source: BackendError,
    },
}

fn shares(labels: &[&str]) -> Vec<LabelShare> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    labels.iter().for_each(|l| *counts.entry(l).or_default() += 1);
    let size = labels.len() as f64;
    let mut out: Vec<LabelShare> = counts
        .into_iter()
        .map(|(label, count)| LabelShare {
            label: label.to_string(),
            count,
            percent: 100.0 * count as f64 / size,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    out
}

/// Gold-label composition of one cluster.
pub fn cluster_composition(
    dataset: &Dataset,
    assignment: &ClusterAssignment,
    cluster_id: usize,
) -> Result<ClusterReport, AnalysisError> {
    if cluster_id >= assignment.k {
        return Err(AnalysisError::UnknownCluster {
            id: cluster_id,
            k: assignment.k,
        });
    }
    let gold = join_gold(dataset, assignment)?;
    let members: Vec<&str> = gold
        .iter()
        .zip(&assignment.labels)
        .filter(|(_, &c)| c == cluster_id)
        .map(|(g, _)| *g)
        .collect();
    Ok(ClusterReport {
        cluster_id,
        size: members.len(),
        composition: shares(&members),
        top_tokens: None,
    })
}

/// Compositions of all clusters, by cluster id.
pub fn cluster_reports(dataset: &Dataset, assignment: &ClusterAssignment) -> Result<Vec<ClusterReport>, AnalysisError> {
    let gold = join_gold(dataset, assignment)?;
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); assignment.k];
    for (g, &c) in gold.iter().zip(&assignment.labels) {
        members[c].push(g);
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(cluster_id, m)| ClusterReport {
            cluster_id,
            size: m.len(),
            composition: shares(m),
            top_tokens: None,
        })
        .collect())
}

/// Lower-cases and strips subword markers (`##`, `Ġ`, `▁`). Punctuation is
/// kept.
pub fn normalize_token(token: &str) -> String {
    let trimmed = token
        .strip_prefix("##")
        .or_else(|| token.strip_prefix('Ġ'))
        .or_else(|| token.strip_prefix('▁'))
        .unwrap_or(token);
    trimmed.to_lowercase()
}

/// Names clusters by the `m` most frequent top-1 mask predictions of their
/// members. `prompts` must be aligned with `assignment.instance_ids`.
pub fn name_clusters(
    backend: &dyn MlmBackend,
    prompts: &[RenderedPrompt],
    assignment: &ClusterAssignment,
    m: usize,
) -> Result<Vec<ClusterReport>, AnalysisError> {
    if m == 0 {
        return Err(AnalysisError::ZeroTokens);
    }
    if prompts.len() != assignment.len() {
        return Err(AnalysisError::Misaligned(format!(
            "{} prompts for {} assigned instances",
            prompts.len(),
            assignment.len()
        )));
    }
    if let Some((p, id)) = prompts
        .iter()
        .zip(&assignment.instance_ids)
        .find(|(p, id)| &p.source_instance_id != *id)
    {
        return Err(AnalysisError::Misaligned(format!(
            "prompt for {} aligned with assignment entry {id}",
            p.source_instance_id
        )));
    }

    let mut counts: Vec<HashMap<String, usize>> = vec![HashMap::new(); assignment.k];
    for (prompt, &cluster) in prompts.iter().zip(&assignment.labels) {
        let top = top_tokens_for(backend, prompt, 1).map_err(|source| AnalysisError::Backend {
            instance_id: prompt.source_instance_id.clone(),
            source,
        })?;
        *counts[cluster].entry(normalize_token(&top[0].token)).or_default() += 1;
    }
    let sizes = assignment.cluster_sizes();
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(cluster_id, tokens)| {
            let mut tokens: Vec<TokenCount> = tokens
                .into_iter()
                .map(|(token, count)| TokenCount { token, count })
                .collect();
            tokens.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
            tokens.truncate(m);
            ClusterReport {
                cluster_id,
                size: sizes[cluster_id],
                composition: Vec::new(),
                top_tokens: Some(tokens),
            }
        })
        .collect())
}
