//! Human-readable views of a scored clustering.

mod composition;
mod confusion;

pub use composition::{
    cluster_composition, cluster_reports, name_clusters, normalize_token, AnalysisError, ClusterReport,
    LabelShare, TokenCount,
};
pub use confusion::{confusion, diagonalize, max_weight_matching, ConfusionMatrix};
