//! Fully unsupervised relation extraction.
//!
//! Entity-annotated sentences are rendered into single-mask prompts
//! ([`prompt`]), embedded with a frozen masked language model ([`encoder`]),
//! grouped into candidate relations ([`clustering`]) and, when gold labels
//! exist, scored with B³, V-measure and ARI ([`evalmetrics`]). [`analysis`]
//! builds the confusion matrix, cluster compositions and MLM-based cluster
//! names.

pub mod analysis;
pub mod clustering;
pub mod corpus;
pub mod encoder;
pub mod evalmetrics;
pub mod io;
pub mod prompt;
pub mod synthetic;

pub use clustering::{ClusterAssignment, ElbowCurve, Method};
pub use corpus::{Dataset, RelationInstance};
pub use encoder::{EmbeddingMatrix, MlmBackend};
pub use evalmetrics::EvaluationReport;
pub use prompt::{PromptTemplate, RenderedPrompt, TemplateId};
